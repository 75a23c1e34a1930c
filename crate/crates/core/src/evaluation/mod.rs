//! Image-quality metrics, the attribute-editing protocol and report tables.

mod metrics;
mod protocol;
mod report;

pub use metrics::{
    gaussian_taps, psnr, psnr_255, ssim, ssim_255, to_255, PSNR_IDENTICAL_DB, SSIM_K1, SSIM_K2, SSIM_SIGMA,
    SSIM_WINDOW,
};
pub use protocol::{attr_accuracy, eval_reconstruction, AccuracyResult, AttributeEditor, IdentityEditor};
pub use report::{
    reference_rows, render_report, EvalReport, RenderedReport, REFERENCE_CLASSIFIER_ACCURACY,
    REFERENCE_MEAN_ACCURACY, REFERENCE_PSNR, REFERENCE_SSIM,
};
