//! Multi-perspective retrieval-augmented code completion: corpus preparation,
//! embedding and sparse indexes, prompt-based retrievers, perspective
//! selection, fill-in-the-middle generation and evaluation.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod embed;
pub mod index;
pub mod retrieve;
pub mod text;
pub mod select;
pub mod eval;
pub mod generate;
pub mod synthetic;
