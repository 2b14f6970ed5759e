//! Coarse-to-fine partition of quantizer levels across unmasking steps.

use crate::error::{Error, Result};

/// Iterations used at full size.
pub const REFERENCE_STEPS: usize = 4;

/// `steps` contiguous groups covering `0..levels`, sizes differing by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmaskSchedule {
    levels: usize,
    groups: Vec<std::ops::Range<usize>>,
}

impl UnmaskSchedule {
    pub fn new(levels: usize, steps: usize) -> Result<Self> {
        if steps == 0 || steps > levels {
            return Err(Error::InvalidConfig(format!("cannot split {levels} levels into {steps} steps")));
        }
        let (base, extra) = (levels / steps, levels % steps);
        let mut start = 0;
        let groups = (0..steps)
            .map(|s| {
                let size = base + usize::from(s < extra);
                let g = start..start + size;
                start += size;
                g
            })
            .collect();
        Ok(Self { levels, groups })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn steps(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[std::ops::Range<usize>] {
        &self.groups
    }

    /// Committed level counts at the start of each step: the training-time mask states.
    pub fn group_starts(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.start).collect()
    }
}
