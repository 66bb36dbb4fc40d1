//! GeoLife ingestion: raw file parsing, label joining, stay-point
//! segmentation and the canonical JSON Lines dataset.

mod dataset;
mod labels;
mod plt;
mod staypoint;

pub use dataset::{read_dataset, read_dataset_file, write_dataset, write_dataset_file};
pub use labels::{label_join, parse_labels, JoinStats, LabelInterval};
pub use plt::parse_plt;
pub use staypoint::{segment_stay_points, StayPointConfig};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};

pub(crate) fn utc_seconds(date: NaiveDate, time: NaiveTime) -> f64 {
    NaiveDateTime::new(date, time).and_utc().timestamp() as f64
}
