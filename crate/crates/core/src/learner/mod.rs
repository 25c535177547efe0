//! The ReLEX learner: one ridge regression per (feature map, step), an
//! optimistic Q estimate per map, and the pointwise minimum across maps.

mod plan;
mod schedule;
mod state;

pub use plan::{q_backward_pass, EpisodePlan, PreparedClass};
pub use schedule::{bonus, BetaRule, BetaSchedule, MapScale};
pub use state::{LearnerSnapshot, LearnerState, RepStats, StatsSnapshot};
