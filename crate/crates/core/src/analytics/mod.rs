//! Agreement statistics for observer training and SUS usability scoring.

mod agreement;
mod sus;

pub use agreement::{
    align, align_export, cohen_kappa, fleiss_kappa, percent_agreement, AgreementError, AgreementResult,
    AlignReport, ConfusionMatrix, ItemId, RatingsTable, Statistic,
};
pub use sus::{sus_mean, sus_score, SusError, SusResponse, SUS_ITEMS};
