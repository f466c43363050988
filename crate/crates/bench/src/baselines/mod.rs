//! Classical comparison methods: exact k-NN, a CART tree and a
//! cross-validated random-search tuner.

mod knn;
mod tree;
mod tune;

pub use knn::{knn_predict, KnnParams};
pub use tree::{gini, tree_fit, tree_predict, Node, Tree, TreeParams};
pub use tune::{
    assign_folds, tune, Family, FoldAudit, TuneBudget, TuneResult, TunedParams, KNN_MAX_K,
    TREE_DEPTH, TREE_MIN_LEAF, TREE_MIN_SPLIT,
};
