//! Time-bin matrix product state machinery: chain storage, canonical form,
//! truncated SVD splits, adjacent swaps, gate application and contractions.

mod mpo;
mod state;
mod tensor;

pub use mpo::{Mpo, MpoSite};
pub use state::{transfer, transfer_op, transfer_right, transfer_right_op, SiteLabel, TimeBinState};
pub use tensor::{SiteTensor, TruncationPolicy};
