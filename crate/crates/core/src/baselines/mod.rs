//! Comparison estimators: histogram-ESPRIT and coherent signal subspace
//! (CSS) focusing with wideband MUSIC.

mod css;
mod histogram;

pub use css::{css_localize, focusing_matrix, CssConfig, CssEstimate, InitialDoas};
pub use histogram::{hist_esprit, HistogramConfig, HistogramEstimate};
