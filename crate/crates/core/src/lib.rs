mod binio;
pub mod chemio;
pub mod cvsplit;
pub mod diffcore;
pub mod graphbuild;
pub mod harness;
pub mod layers;
pub mod metrics;
pub mod potentialnet;
pub mod synth;
