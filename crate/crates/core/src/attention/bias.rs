use crate::error::{Error, Result};
use crate::scene_graph::{classify_relation, AdjacencyMatrix, BoundingBox, RelationType};
use crate::tensor::{Tensor, MASK_SENTINEL};

use super::Segment;

const N_RELATIONS: usize = 12;

/// Additive per-head attention bias with entries `0` or [`MASK_SENTINEL`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBias {
    heads: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AttentionBias {
    pub fn zeros(heads: usize, rows: usize, cols: usize) -> Self {
        AttentionBias {
            heads,
            rows,
            cols,
            data: vec![0.0; heads * rows * cols],
        }
    }

    /// Builds a bias from a per-cell permission predicate `(head, row, col)`.
    pub fn from_fn(heads: usize, rows: usize, cols: usize, mut allowed: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(heads * rows * cols);
        for h in 0..heads {
            for r in 0..rows {
                for c in 0..cols {
                    data.push(if allowed(h, r, c) { 0.0 } else { MASK_SENTINEL });
                }
            }
        }
        AttentionBias { heads, rows, cols, data }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.heads, self.rows, self.cols)
    }

    pub fn get(&self, head: usize, row: usize, col: usize) -> f64 {
        self.data[(head * self.rows + row) * self.cols + col]
    }

    pub fn is_open(&self, head: usize, row: usize, col: usize) -> bool {
        self.get(head, row, col) == 0.0
    }

    pub fn head(&self, head: usize) -> Tensor {
        let n = self.rows * self.cols;
        Tensor::raw(vec![self.rows, self.cols], self.data[head * n..(head + 1) * n].to_vec())
    }

    /// Same mask, with every head removed: all cells open.
    pub fn cleared(&self) -> AttentionBias {
        AttentionBias::zeros(self.heads, self.rows, self.cols)
    }

    /// Errors if any head has a query row without an open cell.
    pub fn validate(&self) -> Result<()> {
        for h in 0..self.heads {
            for r in 0..self.rows {
                if !(0..self.cols).any(|c| self.is_open(h, r, c)) {
                    return Err(Error::FullyMasked { row: r });
                }
            }
        }
        Ok(())
    }
}

/// Which relation labels each relation-aware head may attend along.
///
/// With 12 heads, head `j` gets the circular window of `kappa` labels
/// starting at label `j + 1`. With fewer heads (a divisor of 12) head `h`
/// takes the window that head `h * 12 / heads` would have had.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadRelationAssignment {
    kappa: usize,
    permitted: Vec<[bool; N_RELATIONS + 1]>,
}

impl HeadRelationAssignment {
    pub fn new(heads: usize, kappa: usize) -> Result<Self> {
        if kappa == 0 || kappa > N_RELATIONS {
            return Err(Error::contract(format!("kappa {kappa} outside 1..=12")));
        }
        if heads == 0 || N_RELATIONS % heads != 0 {
            return Err(Error::contract(format!("relation-aware head count {heads} must divide 12")));
        }
        let stride = N_RELATIONS / heads;
        let permitted = (0..heads)
            .map(|h| {
                let start = h * stride;
                let mut set = [false; N_RELATIONS + 1];
                for i in 0..kappa {
                    set[(start + i) % N_RELATIONS + 1] = true;
                }
                set
            })
            .collect();
        Ok(HeadRelationAssignment { kappa, permitted })
    }

    pub fn heads(&self) -> usize {
        self.permitted.len()
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn permits(&self, head: usize, label: u8) -> bool {
        label != 0 && self.permitted[head][label as usize]
    }

    /// Labels permitted for `head`, ascending.
    pub fn relations(&self, head: usize) -> Vec<u8> {
        (1..=N_RELATIONS as u8).filter(|&l| self.permits(head, l)).collect()
    }
}

/// Scene-graph mask: cell `(u, v)` is open in head `h` when the edge label
/// `adj[u][v]` is permitted for `h`, and always on the diagonal.
pub fn sra_bias(adj: &AdjacencyMatrix, assignment: &HeadRelationAssignment) -> AttentionBias {
    let n = adj.len();
    AttentionBias::from_fn(assignment.heads(), n, n, |h, u, v| {
        u == v || assignment.permits(h, adj.get(u, v))
    })
}

/// Mask that only enforces decoder causality.
///
/// Decoder rows see every non-decoder position and decoder positions up to
/// their own; non-decoder rows never see decoder positions.
pub fn decoder_causal_bias(segments: &[Segment], heads: usize) -> AttentionBias {
    let n = segments.len();
    AttentionBias::from_fn(heads, n, n, |_, u, v| causal_open(segments, u, v).unwrap_or(true))
}

/// `Some(open)` when the decoder rule decides the cell, `None` otherwise.
fn causal_open(segments: &[Segment], u: usize, v: usize) -> Option<bool> {
    if u == v {
        return Some(true);
    }
    match (segments[u] == Segment::Decoder, segments[v] == Segment::Decoder) {
        (true, true) => Some(v <= u),
        (false, true) => Some(false),
        (true, false) => Some(true),
        (false, false) => None,
    }
}

/// Positional mask over question, visual and decoder positions.
///
/// Decoder causality applies first. Question positions are open to and
/// from every non-decoder position. Two visual positions are open in head
/// `h` when their geometric relation is permitted for `h` and their centers
/// are within `distance_threshold`.
pub fn pra_bias(
    segments: &[Segment],
    boxes: &[Option<BoundingBox>],
    assignment: &HeadRelationAssignment,
    distance_threshold: f64,
) -> Result<AttentionBias> {
    let n = segments.len();
    if boxes.len() != n {
        return Err(Error::contract("pra_bias: segments and boxes differ in length"));
    }
    for (i, (s, b)) in segments.iter().zip(boxes).enumerate() {
        if s.requires_box() && b.is_none() {
            return Err(Error::contract(format!("visual position {i} has no bounding box")));
        }
    }
    let relation = |u: usize, v: usize| -> Option<(RelationType, f64)> {
        let (a, b) = (boxes[u]?, boxes[v]?);
        Some((classify_relation(&a, &b, false), a.center_distance(&b)))
    };
    let mut geometry = vec![None; n * n];
    for u in 0..n {
        for v in 0..n {
            if u != v && segments[u].requires_box() && segments[v].requires_box() {
                geometry[u * n + v] = relation(u, v);
            }
        }
    }
    Ok(AttentionBias::from_fn(assignment.heads(), n, n, |h, u, v| {
        if let Some(open) = causal_open(segments, u, v) {
            return open;
        }
        match geometry[u * n + v] {
            Some((rel, dist)) => assignment.permits(h, rel.label()) && dist <= distance_threshold,
            None => true,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_graph::{build_scene_graph, SceneObject, SceneOcr};

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn window_assignment_examples() {
        let a = HeadRelationAssignment::new(12, 3).unwrap();
        assert_eq!(a.relations(0), vec![1, 2, 3]);
        assert_eq!(a.relations(11), vec![1, 2, 12]);
        let all = HeadRelationAssignment::new(12, 12).unwrap();
        assert!((0..12).all(|h| all.relations(h).len() == 12));
        let one = HeadRelationAssignment::new(12, 1).unwrap();
        for j in 0..12 {
            assert_eq!(one.relations(j), vec![j as u8 + 1]);
        }
        assert!(HeadRelationAssignment::new(12, 0).is_err());
        assert!(HeadRelationAssignment::new(12, 13).is_err());
        assert!(HeadRelationAssignment::new(5, 3).is_err());
    }

    #[test]
    fn default_window_covers_each_relation_three_times() {
        let a = HeadRelationAssignment::new(12, 3).unwrap();
        for label in 1..=12u8 {
            assert_eq!((0..12).filter(|&h| a.permits(h, label)).count(), 3);
        }
    }

    #[test]
    fn reduced_head_count_uses_strided_windows() {
        let a = HeadRelationAssignment::new(4, 3).unwrap();
        assert_eq!(a.relations(0), vec![1, 2, 3]);
        assert_eq!(a.relations(1), vec![4, 5, 6]);
        assert_eq!(a.relations(3), vec![10, 11, 12]);
    }

    #[test]
    fn sra_bias_examples() {
        let assign = HeadRelationAssignment::new(12, 3).unwrap();
        let adj = AdjacencyMatrix::new(3, vec![12, 5, 0, 0, 12, 0, 0, 0, 12]).unwrap();
        let bias = sra_bias(&adj, &assign);
        // Head 3 permits {4, 5, 6}.
        assert!(bias.is_open(3, 0, 1));
        assert!(!bias.is_open(0, 0, 1));
        for h in 0..12 {
            assert!(!bias.is_open(h, 0, 2));
            // Node 2 is isolated: only its diagonal stays open, even where 12 is not permitted.
            assert!(bias.is_open(h, 2, 2));
            assert_eq!((0..3).filter(|&v| bias.is_open(h, 2, v)).count(), 1);
        }
        bias.validate().unwrap();
    }

    #[test]
    fn sra_bias_on_built_graph() {
        let sg = build_scene_graph(
            &[SceneObject { class: "can".into(), bbox: bb(0.1, 0.1, 0.5, 0.5) }],
            &[SceneOcr { text: "coors".into(), bbox: bb(0.2, 0.2, 0.3, 0.3) }],
        )
        .unwrap();
        let bias = sra_bias(&sg.adjacency_matrix(), &HeadRelationAssignment::new(12, 3).unwrap());
        // Surrounding (2) lives in heads 0, 1, 11; inside (1) in heads 0, 10, 11.
        let down: Vec<usize> = (0..12).filter(|&h| bias.is_open(h, 0, 1)).collect();
        let up: Vec<usize> = (0..12).filter(|&h| bias.is_open(h, 1, 0)).collect();
        assert_eq!(down, vec![0, 1, 11]);
        assert_eq!(up, vec![0, 10, 11]);
    }

    #[test]
    fn pra_bias_examples() {
        use Segment::*;
        let assign = HeadRelationAssignment::new(12, 3).unwrap();
        let segments = [Question, Object, Object, Ocr, Decoder, Decoder];
        let boxes = [
            None,
            Some(bb(0.0, 0.0, 0.1, 0.1)),
            Some(bb(0.9, 0.9, 1.0, 1.0)),
            Some(bb(0.05, 0.05, 0.2, 0.2)),
            None,
            None,
        ];
        let bias = pra_bias(&segments, &boxes, &assign, 0.5).unwrap();
        for h in 0..12 {
            // Causality between decoder steps.
            assert!(!bias.is_open(h, 4, 5));
            assert!(bias.is_open(h, 5, 4));
            // Non-decoder rows never see the decoder.
            assert!(!bias.is_open(h, 0, 4));
            assert!(!bias.is_open(h, 1, 5));
            assert!(bias.is_open(h, 4, 1) && bias.is_open(h, 4, 0));
            // Question is open to all non-decoder positions.
            assert!(bias.is_open(h, 0, 2) && bias.is_open(h, 2, 0));
            // Far-apart objects (center distance ~1.27) are closed in every head.
            assert!(!bias.is_open(h, 1, 2));
            // Overlapping object/OCR boxes are open exactly where 11 is permitted.
            assert_eq!(bias.is_open(h, 1, 3), assign.permits(h, 11), "head {h}");
            assert!(bias.is_open(h, 3, 3));
        }
        bias.validate().unwrap();
    }

    #[test]
    fn pra_bias_requires_boxes() {
        let assign = HeadRelationAssignment::new(12, 3).unwrap();
        assert!(pra_bias(&[Segment::Object], &[None], &assign, 0.5).is_err());
    }
}
