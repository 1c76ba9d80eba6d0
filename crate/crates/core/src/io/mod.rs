//! Recording to disk and real-time distribution of pupil and gaze data.

pub mod bus;
pub mod net;
pub mod recording;
pub mod wire;

pub use bus::{Bus, Message, RecvError, Subscription, Topic, QUEUE_CAPACITY};
pub use net::{serve, NetSubscription, ServerHandle};
pub use recording::{
    format_row, format_sig6, read_gaze_csv, read_pupil_csv, read_recording, read_timestamps, write_gaze_csv,
    write_pupil_csv, write_recording, RecordRow, RecordingError, RecordingWriter, GAZE_HEADER,
};
pub use wire::{encode, read_message, write_message, WireError};
