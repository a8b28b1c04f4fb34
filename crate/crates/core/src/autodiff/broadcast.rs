//! Right-aligned broadcasting of a smaller operand into a target shape.

use crate::error::{shape_err, Result};

/// For every flat index of `target`, the flat index into the operand.
#[derive(Debug, Clone)]
pub(crate) struct BroadcastMap {
    /// `None` when the operand already has the target shape.
    index: Option<Vec<usize>>,
    pub operand_len: usize,
}

impl BroadcastMap {
    pub fn new(target: &[usize], operand: &[usize]) -> Result<Self> {
        let operand_len = operand.iter().product();
        if target == operand {
            return Ok(Self { index: None, operand_len });
        }
        if operand.len() > target.len() {
            return shape_err(format!("cannot broadcast {operand:?} into {target:?}"));
        }
        let lead = target.len() - operand.len();
        // operand stride per target axis, 0 on broadcast axes
        let mut strides = vec![0usize; target.len()];
        let mut s = 1;
        for ax in (0..operand.len()).rev() {
            let (od, td) = (operand[ax], target[lead + ax]);
            if od == td {
                strides[lead + ax] = s;
            } else if od != 1 {
                return shape_err(format!("cannot broadcast {operand:?} into {target:?}"));
            }
            s *= od;
        }
        let total: usize = target.iter().product();
        let mut index = Vec::with_capacity(total);
        let mut counter = vec![0usize; target.len()];
        let mut at = 0usize;
        for _ in 0..total {
            index.push(at);
            for ax in (0..target.len()).rev() {
                counter[ax] += 1;
                at += strides[ax];
                if counter[ax] < target[ax] {
                    break;
                }
                at -= strides[ax] * counter[ax];
                counter[ax] = 0;
            }
        }
        Ok(Self { index: Some(index), operand_len })
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        match &self.index {
            Some(ix) => ix[i],
            None => i,
        }
    }

    /// Sums `values` (target-shaped) back onto the operand's shape.
    pub fn reduce(&self, values: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.operand_len];
        for (i, v) in values.enumerate() {
            out[self.get(i)] += v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_broadcast_indices() {
        let m = BroadcastMap::new(&[1, 2, 2, 2], &[1, 2, 1, 1]).unwrap();
        let got: Vec<_> = (0..8).map(|i| m.get(i)).collect();
        assert_eq!(got, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn mask_broadcast_indices() {
        let m = BroadcastMap::new(&[2, 2, 1, 2], &[1, 2]).unwrap();
        let got: Vec<_> = (0..8).map(|i| m.get(i)).collect();
        assert_eq!(got, vec![0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn rejects_incompatible() {
        assert!(BroadcastMap::new(&[2, 3], &[2, 2]).is_err());
        assert!(BroadcastMap::new(&[3], &[1, 3]).is_err());
    }
}
