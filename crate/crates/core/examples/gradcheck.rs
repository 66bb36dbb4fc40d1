//! Compare tape gradients with central differences for a small causal
//! convolution followed by a dense classifier head.
//!
//! cargo run --example gradcheck

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transmode::tensor::{Graph, Tensor, Var};

const H: f64 = 1e-3;

fn main() -> transmode::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut random = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
    // x: 2×3×8 sequence batch, conv 4×3×3 dilated by 2, head 4→3
    let inputs = vec![random(&[2, 3, 8]), random(&[4, 3, 3]), random(&[4]), random(&[4, 3]), random(&[3])];
    let names = ["x", "conv.w", "conv.b", "head.w", "head.b"];

    let loss = |g: &mut Graph<f64>, v: &[Var]| -> transmode::Result<Var> {
        let h = g.conv1d_causal(v[0], v[1], v[2], 2)?;
        let h = g.relu(h)?;
        let last = g.last_step(h, &[8, 5])?;
        let logits = g.dense(last, v[3], v[4])?;
        g.softmax_cross_entropy(logits, &[2, 0])
    };
    let eval = |vals: &[Tensor<f64>]| -> transmode::Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let l = loss(&mut g, &vars)?;
        Ok((g, vars, l))
    };

    let (g, vars, l) = eval(&inputs)?;
    println!("loss {:.6}", g.value(l).item());
    let grads = g.backward(l)?;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let mut worst = 0.0f64;
        for j in 0..input.len() {
            let mut vals = inputs.clone();
            vals[i].data_mut()[j] += H;
            let (gp, _, lp) = eval(&vals)?;
            vals[i].data_mut()[j] -= 2.0 * H;
            let (gm, _, lm) = eval(&vals)?;
            let numeric = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * H);
            let a = analytic.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        println!("{:<7} {:>3} values  worst relative error {worst:.2e}", names[i], input.len());
    }
    Ok(())
}
