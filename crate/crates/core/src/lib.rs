//! Prompt-guided multi-channel molecular representation learning.
//!
//! A molecule is encoded once by a message-passing network and read out
//! three times, each readout steered by its own learned prompt token:
//! molecule distancing (MCD), scaffold distancing (SCD) and context
//! prediction (CP). Fine-tuning mixes the three channel vectors with a
//! softmax-weighted prompt, initialised to the mixture whose property
//! landscape is smoothest (lowest roughness index).
//!
//! The crate also carries the chemistry substrate (SMILES, fingerprints,
//! scaffolds) and the chemical-space probes used to analyse representations.

pub mod chemfeat;
pub mod encoder;
pub mod losses;
pub mod molgraph;
pub mod perturb;
pub mod pipeline;
pub mod spacemetrics;
