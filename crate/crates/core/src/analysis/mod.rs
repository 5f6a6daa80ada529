//! Quantifying the sawtooth and fitting the intra-epoch dynamics models.

mod esp;
mod fit;
mod lsq;
mod nshape;
mod predict;

pub use esp::{default_window, esp_metrics, esp_metrics_from_epochs, window_average, EpochEsp, EspNotice, EspReport};
pub use fit::{
    fit_dot_dtheta, fit_dot_dtheta_with_grid, fit_dot_m, fit_g_norm, fit_m_norm, fit_model, fit_v_norm, DGrid,
    FitModel, FitNotice, FitResult,
};
pub use lsq::{least_squares, nonnegative_least_squares, LsqSolution};
pub use nshape::{nshape_sweep, reference_vectors, unit_grid, NShapeInput, NShapePoint, NShapeSweep};
pub use predict::{predict_loss_curve, PredictedCurve};
