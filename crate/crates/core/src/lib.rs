// SPDX-License-Identifier: Apache-2.0

pub mod affiliation;
pub mod community;
pub mod crawl;
pub mod graph;
pub mod pipeline;
pub mod rng;
pub mod seeds;
pub mod source;
pub mod synth;

#[cfg(test)]
mod testutil;
