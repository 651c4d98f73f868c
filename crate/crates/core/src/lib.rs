//! Time-domain beam alignment for hybrid digital-analog mmWave links.
//!
//! The pipeline runs end to end on a single user equipment (UE):
//!
//! 1. [`channel`] synthesizes sparse multipath channels with Rice fading,
//!    per-path Doppler and a DFT beamspace representation.
//! 2. [`signaling`] draws the ±1 probing sequences, the pseudo-random
//!    finger-shaped beam codebook, and simulates chip-rate RF-chain outputs.
//! 3. [`frontend`] matched-filters, accumulates energy over delay taps,
//!    averages within each beacon slot and assembles the linear system
//!    `q = B·vec(Γ) + floor·1 + w`.
//! 4. [`estimator`] recovers the non-negative angle-domain power matrix Γ
//!    with an active-set NNLS solver and picks the strongest beam pair. An
//!    OMP baseline built on instantaneous coefficients is provided for
//!    comparison.
//! 5. [`metrics`] covers SNR bookkeeping, post-alignment ergodic rate bounds
//!    and power delay profiles.
//! 6. [`harness`] orchestrates seeded Monte Carlo sweeps and writes CSV.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod frontend;
pub mod harness;
pub mod metrics;
pub mod signaling;

pub use channel::{
    ChannelRealization, ClusterParams, CoherenceModel, PathParams, SystemConfig,
};
pub use error::{Error, Result};
pub use estimator::{BeamSelection, NnlsOptions, PsfEstimate};
pub use frontend::MeasurementBatch;
pub use harness::{ExperimentConfig, ResultRow};
pub use metrics::{PdpProfile, RateBounds, SnrReport};
pub use signaling::{BeamCodebook, PnSet, PowerConfig, SignalConfig, StreamSeparation};
