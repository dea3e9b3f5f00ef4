//! Dyadic hierarchical-B GOP planning.

use crate::coding_meta::FrameType;

/// One frame in coding order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramePlan {
    pub poc: u32,
    pub frame_type: FrameType,
    pub temporal_layer: u32,
    /// Reference POCs, past first. Empty for I-frames.
    pub refs: Vec<u32>,
}

/// Coding order for `n` frames.
///
/// POC 0 is intra. Each GOP ends in an anchor at temporal layer 0 that
/// references the previous anchor (or is intra on the intra period); the
/// frames in between are coded by recursive bisection, each referencing the
/// two frames that bound its interval. A trailing partial GOP ends at the
/// last frame.
pub fn coding_order(n: usize, gop_size: usize, intra_period: usize) -> Vec<FramePlan> {
    if n == 0 {
        return Vec::new();
    }
    if intra_period == 1 {
        return (0..n as u32)
            .map(|poc| FramePlan {
                poc,
                frame_type: FrameType::I,
                temporal_layer: 0,
                refs: Vec::new(),
            })
            .collect();
    }
    let mut plans = vec![FramePlan {
        poc: 0,
        frame_type: FrameType::I,
        temporal_layer: 0,
        refs: Vec::new(),
    }];
    let last = n - 1;
    let mut prev = 0usize;
    while prev < last {
        let anchor = (prev + gop_size).min(last);
        let intra = intra_period > 0 && anchor % intra_period == 0;
        plans.push(FramePlan {
            poc: anchor as u32,
            frame_type: if intra { FrameType::I } else { FrameType::B },
            temporal_layer: 0,
            refs: if intra { Vec::new() } else { vec![prev as u32] },
        });
        bisect(prev, anchor, 1, &mut plans);
        prev = anchor;
    }
    plans
}

fn bisect(a: usize, b: usize, depth: u32, plans: &mut Vec<FramePlan>) {
    if b - a <= 1 {
        return;
    }
    let mid = (a + b) / 2;
    plans.push(FramePlan {
        poc: mid as u32,
        frame_type: FrameType::B,
        temporal_layer: depth,
        refs: vec![a as u32, b as u32],
    });
    bisect(a, mid, depth + 1, plans);
    bisect(mid, b, depth + 1, plans);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gop16_has_five_layers() {
        let plans = coding_order(17, 16, 32);
        assert_eq!(plans.len(), 17);
        let mut by_layer = [0usize; 5];
        for p in &plans {
            by_layer[p.temporal_layer as usize] += 1;
        }
        assert_eq!(by_layer, [2, 1, 2, 4, 8]);
        let p8 = plans.iter().find(|p| p.poc == 8).unwrap();
        assert_eq!(p8.refs, vec![0, 16]);
        let p3 = plans.iter().find(|p| p.poc == 3).unwrap();
        assert_eq!((p3.temporal_layer, p3.refs.clone()), (4, vec![2, 4]));
    }

    #[test]
    fn references_precede_in_coding_order() {
        for n in 1..40 {
            let plans = coding_order(n, 8, 16);
            let mut seen = std::collections::HashSet::new();
            for p in &plans {
                for r in &p.refs {
                    assert!(seen.contains(r), "n={n} poc={} ref={r}", p.poc);
                }
                seen.insert(p.poc);
            }
            assert_eq!(seen.len(), n);
        }
    }

    #[test]
    fn intra_period_marks_anchors() {
        let plans = coding_order(33, 16, 16);
        let intra: Vec<u32> = plans
            .iter()
            .filter(|p| p.frame_type == FrameType::I)
            .map(|p| p.poc)
            .collect();
        assert_eq!(intra, vec![0, 16, 32]);
        assert!(coding_order(5, 4, 1).iter().all(|p| p.frame_type == FrameType::I));
        let only_first = coding_order(33, 16, 0);
        assert_eq!(only_first.iter().filter(|p| p.frame_type == FrameType::I).count(), 1);
    }
}
