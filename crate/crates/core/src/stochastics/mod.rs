//! Brownian ensembles, terminal conditions, controls and moment estimators.

mod control;
mod ensemble;
mod grid;
mod moments;
mod terminal;

pub use control::{
    doleans, ess_threshold, relative_entropy, ConstantControl, Control, ControlProcess, EntropyEstimate, FnControl,
    MarkovFn, MartingaleProxy, TableControl, LOG_WEIGHT_CAP,
};
pub use ensemble::{sidecar_path, EnsembleSidecar, PathEnsemble, PathRef, PathView, PathWindow, RNG_SCHEME, TREE_SCHEME};
pub use grid::TimeGrid;
pub use moments::{class_d_diagnostic, exp_moment, top1_share, MomentEstimate, StoppingFamily, DOMINANCE_SHARE};
pub use terminal::{critical_quantile, critical_survival, CustomTerminal, TerminalFn, TerminalKind, TerminalSpec};
