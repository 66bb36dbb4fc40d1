//! Parameter layout and forward passes of the two branches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::mapping::CHANNELS;
use crate::tensor::{Element, Graph, ParamStore, Tensor, Var};

/// Independent RNG streams derived from one seed.
pub(crate) mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DROPOUT: u64 = 3;
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The CNN and TCN branches together with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Graph handles of a network's parameters.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl Network {
    /// Weights come from the `INIT` stream of `seed`; CNN parameters are drawn
    /// before TCN parameters so the image branch does not depend on the
    /// sequence branch's size.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, streams::INIT);
        let mut params = ParamStore::new();
        init_cnn(&config, &mut params, &mut rng)?;
        init_tcn(&config, &mut params, &mut rng)?;
        Ok(Network { config, params })
    }

    pub fn bind<S: Element>(&self, graph: &mut Graph<S>) -> Bound {
        Bound {
            vars: self.params.bind(graph),
        }
    }

    /// Like [`Network::bind`] but with explicit values, one per parameter in
    /// store order. Used to evaluate the network at perturbed weights.
    pub fn bind_values<S: Element>(&self, graph: &mut Graph<S>, values: &[Tensor<S>]) -> Result<Bound> {
        let params = self.params.params();
        if values.len() != params.len() {
            return Err(Error::Shape(format!("{} values for {} parameters", values.len(), params.len())));
        }
        let mut vars = Vec::with_capacity(values.len());
        for (p, v) in params.iter().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape(format!(
                    "{}: expected {:?}, got {:?}",
                    p.name,
                    p.value.shape(),
                    v.shape()
                )));
            }
            vars.push(graph.leaf(v.clone()));
        }
        Ok(Bound { vars })
    }

    fn var(&self, bound: &Bound, name: &str) -> Result<Var> {
        self.params
            .index_of(name)
            .map(|i| bound.vars[i])
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name:?}")))
    }

    /// Image batch `N×3×H×W` (H = cells_y, W = cells_x) to logits `N×K`.
    pub fn cnn_forward<S: Element>(&self, g: &mut Graph<S>, bound: &Bound, images: Var) -> Result<Var> {
        let grid = self.config.grid;
        let s = g.shape(images);
        if s.len() != 4 || s[1] != CHANNELS || s[2] != grid.cells_y || s[3] != grid.cells_x {
            return Err(Error::Shape(format!(
                "cnn expects N×{CHANNELS}×{}×{} images, got {s:?}",
                grid.cells_y, grid.cells_x
            )));
        }
        let p = |name: &str| self.var(bound, name);
        let stem = g.conv2d(images, p("cnn.stem.w")?, p("cnn.stem.b")?, 1, 1)?;
        let mut x = g.relu(stem)?;
        let mut in_ch = self.config.cnn.channels[0];
        for (i, &out_ch) in self.config.cnn.channels.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let pre = format!("cnn.block{i}");
            let h = g.conv2d(x, p(&format!("{pre}.conv1.w"))?, p(&format!("{pre}.conv1.b"))?, stride, 1)?;
            let h = g.relu(h)?;
            let h = g.conv2d(h, p(&format!("{pre}.conv2.w"))?, p(&format!("{pre}.conv2.b"))?, 1, 1)?;
            let shortcut = if in_ch != out_ch || stride != 1 {
                g.conv2d(x, p(&format!("{pre}.proj.w"))?, p(&format!("{pre}.proj.b"))?, stride, 0)?
            } else {
                x
            };
            let sum = g.add(h, shortcut)?;
            x = g.relu(sum)?;
            in_ch = out_ch;
        }
        let pooled = g.global_avg_pool(x)?;
        g.dense(pooled, p("cnn.head.w")?, p("cnn.head.b")?)
    }

    /// Sequence batch `N×C×L` to logits `N×K`, read out at `lengths[n] − 1`.
    pub fn tcn_forward<S: Element, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<S>,
        bound: &Bound,
        seqs: Var,
        lengths: &[usize],
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        let tcn = &self.config.tcn;
        let s = g.shape(seqs);
        if s.len() != 3 || s[1] != tcn.in_channels || s[2] != tcn.seq_len {
            return Err(Error::Shape(format!(
                "tcn expects N×{}×{} sequences, got {s:?}",
                tcn.in_channels, tcn.seq_len
            )));
        }
        let p = |name: &str| self.var(bound, name);
        let mut x = seqs;
        let mut in_ch = tcn.in_channels;
        for (i, d) in tcn.dilations().into_iter().enumerate() {
            let pre = format!("tcn.level{i}");
            let h = g.conv1d_causal(x, p(&format!("{pre}.conv1.w"))?, p(&format!("{pre}.conv1.b"))?, d)?;
            let h = g.relu(h)?;
            let h = g.dropout(h, tcn.dropout, rng, training)?;
            let h = g.conv1d_causal(h, p(&format!("{pre}.conv2.w"))?, p(&format!("{pre}.conv2.b"))?, d)?;
            let h = g.relu(h)?;
            let h = g.dropout(h, tcn.dropout, rng, training)?;
            let shortcut = if in_ch != tcn.hidden_units {
                g.conv1d_causal(x, p(&format!("{pre}.down.w"))?, p(&format!("{pre}.down.b"))?, 1)?
            } else {
                x
            };
            let sum = g.add(h, shortcut)?;
            x = g.relu(sum)?;
            in_ch = tcn.hidden_units;
        }
        let last = g.last_step(x, lengths)?;
        g.dense(last, p("tcn.head.w")?, p("tcn.head.b")?)
    }

    /// Builds an `N×3×H×W` leaf from concatenated channel-major images.
    pub fn image_leaf<S: Element>(&self, g: &mut Graph<S>, data: &[f32]) -> Result<Var> {
        let grid = self.config.grid;
        let per = CHANNELS * grid.cells_x * grid.cells_y;
        let n = data.len() / per.max(1);
        let t = Tensor::new(&[n, CHANNELS, grid.cells_y, grid.cells_x], data.to_vec())?;
        Ok(g.leaf(t.cast()))
    }

    /// Builds an `N×C×L` leaf from concatenated channel-major sequences.
    pub fn seq_leaf<S: Element>(&self, g: &mut Graph<S>, data: &[f32]) -> Result<Var> {
        let tcn = &self.config.tcn;
        let per = tcn.in_channels * tcn.seq_len;
        let n = data.len() / per.max(1);
        let t = Tensor::new(&[n, tcn.in_channels, tcn.seq_len], data.to_vec())?;
        Ok(g.leaf(t.cast()))
    }
}

fn init_cnn<R: Rng + ?Sized>(cfg: &ModelConfig, params: &mut ParamStore, rng: &mut R) -> Result<()> {
    let ch = &cfg.cnn.channels;
    params.insert_he_uniform("cnn.stem.w", &[ch[0], CHANNELS, 3, 3], CHANNELS * 9, rng)?;
    params.insert_zeros("cnn.stem.b", &[ch[0]])?;
    let mut in_ch = ch[0];
    for (i, &out_ch) in ch.iter().enumerate() {
        let pre = format!("cnn.block{i}");
        params.insert_he_uniform(&format!("{pre}.conv1.w"), &[out_ch, in_ch, 3, 3], in_ch * 9, rng)?;
        params.insert_zeros(&format!("{pre}.conv1.b"), &[out_ch])?;
        params.insert_he_uniform(&format!("{pre}.conv2.w"), &[out_ch, out_ch, 3, 3], out_ch * 9, rng)?;
        params.insert_zeros(&format!("{pre}.conv2.b"), &[out_ch])?;
        if in_ch != out_ch || i > 0 {
            params.insert_he_uniform(&format!("{pre}.proj.w"), &[out_ch, in_ch, 1, 1], in_ch, rng)?;
            params.insert_zeros(&format!("{pre}.proj.b"), &[out_ch])?;
        }
        in_ch = out_ch;
    }
    params.insert_he_uniform("cnn.head.w", &[in_ch, cfg.classes], in_ch, rng)?;
    params.insert_zeros("cnn.head.b", &[cfg.classes])?;
    Ok(())
}

fn init_tcn<R: Rng + ?Sized>(cfg: &ModelConfig, params: &mut ParamStore, rng: &mut R) -> Result<()> {
    let tcn = &cfg.tcn;
    let (hid, k) = (tcn.hidden_units, tcn.kernel);
    let mut in_ch = tcn.in_channels;
    for i in 0..tcn.levels {
        let pre = format!("tcn.level{i}");
        params.insert_he_uniform(&format!("{pre}.conv1.w"), &[hid, in_ch, k], in_ch * k, rng)?;
        params.insert_zeros(&format!("{pre}.conv1.b"), &[hid])?;
        params.insert_he_uniform(&format!("{pre}.conv2.w"), &[hid, hid, k], hid * k, rng)?;
        params.insert_zeros(&format!("{pre}.conv2.b"), &[hid])?;
        if in_ch != hid {
            params.insert_he_uniform(&format!("{pre}.down.w"), &[hid, in_ch, 1], in_ch, rng)?;
            params.insert_zeros(&format!("{pre}.down.b"), &[hid])?;
        }
        in_ch = hid;
    }
    params.insert_he_uniform("tcn.head.w", &[hid, cfg.classes], hid, rng)?;
    params.insert_zeros("tcn.head.b", &[cfg.classes])?;
    Ok(())
}
