//! Citation-aware hard-negative mining for dense retrievers.
//!
//! The pipeline crawls 2-hop citation neighborhoods from PubMed
//! ([`pubmed`], [`neighborhood`]), embeds each candidate pool and builds its
//! dense cosine graph ([`vectorspace`]), walks that graph to mine diverse hard
//! negatives ([`miner`]), and scores retrieval runs and latency
//! ([`evalkit`], [`flatindex`]).

pub mod pubmed;
pub mod evalkit;
pub mod flatindex;
pub mod miner;
pub mod neighborhood;
pub mod vectorspace;
mod par;
