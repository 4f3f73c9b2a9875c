pub mod artifact;
pub mod emd;
pub mod fir;
pub mod nlms;
pub mod pipeline;
pub mod remez;
pub mod spectral;
pub mod wavelet;
