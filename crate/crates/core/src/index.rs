//! Mixed-radix indexing of joint states and joint actions.
//!
//! A joint index is the mixed-radix number whose digits are the agents' local
//! indices, with agent 1 as the most significant digit. All indices are
//! zero-based.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Product of the radices, or `None` on overflow.
pub fn radix_product(radices: &[usize]) -> Option<usize> {
    radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r))
}

/// Encode per-agent digits into a joint index.
pub fn encode_joint(digits: &[usize], radices: &[usize]) -> Result<usize> {
    if digits.len() != radices.len() {
        return Err(Error::Shape {
            expected: radices.len(),
            found: digits.len(),
        });
    }
    let mut index = 0usize;
    for (agent, (&d, &r)) in digits.iter().zip(radices).enumerate() {
        if d >= r {
            return Err(Error::Index(format!(
                "digit {d} of agent {agent} is not below radix {r}"
            )));
        }
        index = index * r + d;
    }
    Ok(index)
}

/// Decode a joint index into per-agent digits.
pub fn decode_joint(index: usize, radices: &[usize]) -> Result<Vec<usize>> {
    let total = radix_product(radices)
        .ok_or_else(|| Error::Index(format!("radix product overflows for {radices:?}")))?;
    if index >= total {
        return Err(Error::Index(format!(
            "joint index {index} out of range 0..{total}"
        )));
    }
    let mut digits = vec![0; radices.len()];
    decode_into(index, radices, &mut digits);
    Ok(digits)
}

/// Unchecked decode into a caller-owned buffer. `index` must be in range.
pub(crate) fn decode_into(mut index: usize, radices: &[usize], out: &mut [usize]) {
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = index % r;
        index /= r;
    }
}

/// Digit of a single agent in a joint index, without allocating.
pub(crate) fn digit_of(index: usize, radices: &[usize], agent: usize) -> usize {
    let stride: usize = radices[agent + 1..].iter().product();
    (index / stride) % radices[agent]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_max() {
        assert_eq!(encode_joint(&[0, 0], &[2, 2]).unwrap(), 0);
        assert_eq!(encode_joint(&[1, 1], &[2, 2]).unwrap(), 3);
        assert_eq!(decode_joint(0, &[2, 2]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn three_agents() {
        assert_eq!(encode_joint(&[1, 0, 2], &[2, 3, 4]).unwrap(), 14);
        assert_eq!(decode_joint(14, &[2, 3, 4]).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn enumeration_is_a_bijection() {
        // Enumerate tuples in lexicographic order; the encoding must count 0..24.
        let radices = [2, 3, 4];
        let mut expected = 0;
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(encode_joint(&[a, b, c], &radices).unwrap(), expected);
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 24);
        for i in 0..6 {
            let d = decode_joint(i, &[3, 2]).unwrap();
            assert_eq!(encode_joint(&d, &[3, 2]).unwrap(), i);
        }
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(encode_joint(&[2, 0], &[2, 2]), Err(Error::Index(_))));
        assert!(matches!(decode_joint(4, &[2, 2]), Err(Error::Index(_))));
        assert!(matches!(encode_joint(&[0], &[2, 2]), Err(Error::Shape { .. })));
    }

    #[test]
    fn digit_of_matches_decode() {
        let radices = [3, 1, 4, 2];
        for i in 0..24 {
            let d = decode_joint(i, &radices).unwrap();
            for (agent, &digit) in d.iter().enumerate() {
                assert_eq!(digit_of(i, &radices, agent), digit);
            }
        }
    }
}
