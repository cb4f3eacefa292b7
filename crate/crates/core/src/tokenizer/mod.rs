//! Token sampling on k-NN similarity graphs, token swapping and sequence
//! assembly.

mod sequence;
mod swap;
mod table;

pub use sequence::{build_sequences, SequenceBatch, SequenceStrategy};
pub use swap::{hop_bound_oracle, reachable_within, swap_tokens, swap_tokens_counted, SwapConfig};
pub use table::{build_token_tables, cosine_similarity, cosine_topk, TokenTable, View};
