//! Leader election on clique networks.
//!
//! `clique-lab` simulates the clean-network (KT₀) clique: every node knows only
//! its own identity and `n`, and reaches its `n - 1` neighbours through ports
//! whose wiring it learns by using them. On top of that model it provides:
//!
//! * [`sync`]: a deterministic round executor with simultaneous or adversarial
//!   wake-up and the single-send round expansion,
//! * [`event`]: an event-driven asynchronous executor with FIFO links and
//!   pluggable (possibly adaptive) delay schedulers,
//! * [`protocols`]: six leader election protocols,
//! * [`adversary`]: wake-up strategies, an adaptive port-wiring adversary that
//!   keeps components isolated, and hostile schedulers,
//! * [`experiment`] and [`verify`]: Monte Carlo harness, CSV/JSONL output and
//!   the acceptance checks.
//!
//! ```
//! use clique_lab::net::{IdAssignment, PortMapping};
//! use clique_lab::protocols::ImprovedAfekGafni;
//! use clique_lab::sync::{run_sync, SyncConfig};
//!
//! let ids = IdAssignment::new((1..=16).collect(), 16).unwrap();
//! let mut mapping = PortMapping::random(16, 7);
//! let outcome = run_sync(&ImprovedAfekGafni::new(3).unwrap(), &SyncConfig::new(ids), &mut mapping).unwrap();
//! assert_eq!(outcome.leader_count(), 1);
//! assert_eq!(outcome.rounds_used, 3);
//! ```

pub mod adversary;
pub mod error;
pub mod event;
pub mod experiment;
pub mod net;
pub mod protocols;
pub mod rng;
pub mod sync;
pub mod trace;
pub mod verify;

pub use error::{ConfigError, NetError, SimError};
pub use protocols::Decision;
