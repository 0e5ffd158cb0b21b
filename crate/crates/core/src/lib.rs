//! Detection and explanation of implicit toxic speech.
//!
//! A target-group generator rewrites each post as `Target:{groups} Post:{post}`.
//! An encoder-decoder student then classifies the post with a pooled encoder
//! head, distilled from a frozen teacher classifier. Its decoder explains posts
//! predicted toxic and emits `[None]` otherwise.

pub mod corpus;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod text;
pub mod tg;
pub mod toy;

pub use error::{Error, Result};
