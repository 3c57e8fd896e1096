//! The pool-based acquisition loop.

pub mod acquisition;
pub mod pool;
pub mod run;

pub use acquisition::{acquire, draw_seed, random_acquire, Acquisition};
pub use pool::PoolState;
pub use run::{purpose, round_init_id, run_active_learning, stream_id, ALConfig, ActiveLearningRun, RoundRecord};
