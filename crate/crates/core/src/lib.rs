// Negated float comparisons reject NaN on purpose; index loops walk parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod cli;
pub mod error;
pub mod greedy;
pub mod models;
pub mod opt;
pub mod renorm;
pub mod seqlab;
pub mod space;
pub mod util;
pub mod verify;
