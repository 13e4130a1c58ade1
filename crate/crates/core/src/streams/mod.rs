//! Asynchronous stream ingestion, time synchronization and windowing.

mod sample;
mod segment;
mod sync;
mod window;

pub use sample::{read_jsonl, write_jsonl, Modality, SensorSample};
pub use segment::{Channel, ChannelData, Segment, Validity};
pub use sync::{radio_heading, synchronize, SyncOptions, SyncPolicy};
pub use window::{
    cumulative_positions, horizon_ticks, make_windows, position_deltas, stride_for, window_count,
    WindowBundle,
};
