use crate::error::{Error, Result};
use crate::matrixio::Block;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train_blocks: Vec<usize>,
    pub test_blocks: Vec<usize>,
}

/// Outer cross-validation folds over contiguous blocks of scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub blocks: Vec<Block>,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.end).max().unwrap_or(0)
    }

    fn rows_of(&self, ids: &[usize]) -> Vec<usize> {
        ids.iter().flat_map(|&b| self.blocks[b].rows()).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        self.rows_of(&self.folds[fold].train_blocks)
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        self.rows_of(&self.folds[fold].test_blocks)
    }
}

/// Leave-one-block-out: one fold per block, tested on that block and
/// trained on all others.
pub fn make_split_plan(blocks: &[Block]) -> Result<SplitPlan> {
    if blocks.len() < 3 {
        return Err(Error::invalid(format!(
            "leave-one-block-out needs at least 3 blocks, got {}",
            blocks.len()
        )));
    }
    if let Some(i) = blocks.iter().position(Block::is_empty) {
        return Err(Error::invalid(format!("block {i} is empty")));
    }
    if let Some(i) = (1..blocks.len()).find(|&i| blocks[i].start < blocks[i - 1].end) {
        return Err(Error::invalid(format!("blocks {} and {i} overlap or are unordered", i - 1)));
    }
    let folds = (0..blocks.len())
        .map(|test| Fold {
            train_blocks: (0..blocks.len()).filter(|&b| b != test).collect(),
            test_blocks: vec![test],
        })
        .collect();
    Ok(SplitPlan {
        blocks: blocks.to_vec(),
        folds,
    })
}
