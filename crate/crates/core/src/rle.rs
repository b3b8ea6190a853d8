//! Run-length encoding for small binary bitmaps.
//!
//! Runs alternate background/ink in row-major order, starting with a
//! (possibly zero-length) background run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("run lengths sum to {got}, expected {expected}")]
pub struct RleError {
    pub got: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleBitmap {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

impl RleBitmap {
    pub fn encode(width: usize, height: usize, cells: &[bool]) -> Self {
        debug_assert_eq!(cells.len(), width * height);
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &c in cells {
            if c == current {
                len += 1;
            } else {
                runs.push(len);
                current = c;
                len = 1;
            }
        }
        runs.push(len);
        RleBitmap {
            width,
            height,
            runs,
        }
    }

    pub fn decode(&self) -> Result<Vec<bool>, RleError> {
        let expected = self.width * self.height;
        let got: usize = self.runs.iter().map(|&r| r as usize).sum();
        if got != expected {
            return Err(RleError { got, expected });
        }
        let mut cells = Vec::with_capacity(expected);
        for (i, &r) in self.runs.iter().enumerate() {
            cells.extend(std::iter::repeat(i % 2 == 1).take(r as usize));
        }
        Ok(cells)
    }
}
