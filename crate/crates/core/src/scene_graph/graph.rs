use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::geometry::{classify_relation, iou, BoundingBox, RelationType};

pub const MAX_SG_OBJECTS: usize = 36;
pub const MAX_SG_ATTRIBUTES: usize = 100;

/// An object detection handed to the graph builder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: String,
    pub bbox: BoundingBox,
}

/// An OCR token handed to the graph builder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneOcr {
    pub text: String,
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectNode {
    pub id: usize,
    pub class: String,
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeNode {
    pub id: usize,
    pub text: String,
    pub bbox: BoundingBox,
    pub owner: usize,
}

/// Directed triplet `(src, relation, dst)`, serialized as `[src, label, dst]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, RelationType, usize)", into = "(usize, RelationType, usize)")]
pub struct Edge {
    pub src: usize,
    pub relation: RelationType,
    pub dst: usize,
}

impl From<(usize, RelationType, usize)> for Edge {
    fn from((src, relation, dst): (usize, RelationType, usize)) -> Self {
        Edge { src, relation, dst }
    }
}

impl From<Edge> for (usize, RelationType, usize) {
    fn from(e: Edge) -> Self {
        (e.src, e.relation, e.dst)
    }
}

/// Objects, their OCR attributes, and the relation triplets between them.
///
/// Node ids are unique across both node kinds. The builder numbers objects
/// `0..n_obj` and attributes `n_obj..n_obj + n_attr`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneGraph {
    pub objects: Vec<ObjectNode>,
    pub attributes: Vec<AttributeNode>,
    pub edges: Vec<Edge>,
}

/// Dense `P × P` relation labels; 0 marks a missing edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    labels: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn new(n: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != n * n {
            return Err(Error::Shape {
                op: "adjacency",
                lhs: vec![n, n],
                rhs: vec![labels.len()],
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 12) {
            return Err(Error::contract(format!("adjacency label {bad} outside 0..=12")));
        }
        Ok(AdjacencyMatrix { n, labels })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.labels[i * self.n + j]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.labels.chunks(self.n.max(1)).map(<[u8]>::to_vec).collect()
    }

    /// Same graph with node `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> AdjacencyMatrix {
        let mut labels = vec![0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                labels[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        AdjacencyMatrix { n: self.n, labels }
    }
}

/// Owner object for every OCR box.
///
/// Objects strictly containing the OCR box are ranked by IoU; without a
/// container the highest IoU wins; when every IoU is zero the nearest center
/// wins. Remaining ties go to the lowest object id.
pub fn assign_ocr_attributes(
    objects: &[(usize, BoundingBox)],
    ocrs: &[(usize, BoundingBox)],
) -> Result<BTreeMap<usize, usize>> {
    if objects.is_empty() {
        if ocrs.is_empty() {
            return Ok(BTreeMap::new());
        }
        return Err(Error::contract("cannot assign OCR attributes without objects"));
    }
    let mut sorted = objects.to_vec();
    sorted.sort_by_key(|(id, _)| *id);

    let mut owners = BTreeMap::new();
    for &(ocr_id, ocr_box) in ocrs {
        let best_by_iou = |cands: &mut dyn Iterator<Item = &(usize, BoundingBox)>| {
            let mut best: Option<(usize, f64)> = None;
            for &(id, b) in cands {
                let score = iou(&b, &ocr_box);
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((id, score));
                }
            }
            best
        };
        let containing = best_by_iou(&mut sorted.iter().filter(|(_, b)| b.strictly_contains(&ocr_box)));
        let owner = match containing {
            Some((id, _)) => id,
            None => match best_by_iou(&mut sorted.iter()) {
                Some((id, s)) if s > 0.0 => id,
                _ => {
                    let mut best = (sorted[0].0, f64::INFINITY);
                    for &(id, b) in &sorted {
                        let d = b.center_distance(&ocr_box);
                        if d < best.1 {
                            best = (id, d);
                        }
                    }
                    best.0
                }
            },
        };
        owners.insert(ocr_id, owner);
    }
    Ok(owners)
}

/// Builds the object/OCR scene graph.
///
/// Inputs beyond 36 objects or 100 OCR tokens are dropped, keeping input
/// order. Every ordered object pair gets one relation edge; each attribute
/// is linked only to its owner, by a `surrounding`/`inside` pair.
pub fn build_scene_graph(objects: &[SceneObject], ocrs: &[SceneOcr]) -> Result<SceneGraph> {
    let objects = &objects[..objects.len().min(MAX_SG_OBJECTS)];
    let ocrs = &ocrs[..ocrs.len().min(MAX_SG_ATTRIBUTES)];
    let n_obj = objects.len();

    let obj_boxes: Vec<(usize, BoundingBox)> = objects.iter().map(|o| o.bbox).enumerate().collect();
    let ocr_boxes: Vec<(usize, BoundingBox)> =
        ocrs.iter().enumerate().map(|(i, o)| (n_obj + i, o.bbox)).collect();
    let owners = assign_ocr_attributes(&obj_boxes, &ocr_boxes)?;

    let object_nodes: Vec<ObjectNode> = objects
        .iter()
        .enumerate()
        .map(|(id, o)| ObjectNode {
            id,
            class: o.class.clone(),
            bbox: o.bbox,
        })
        .collect();
    let attribute_nodes: Vec<AttributeNode> = ocrs
        .iter()
        .enumerate()
        .map(|(i, o)| AttributeNode {
            id: n_obj + i,
            text: o.text.clone(),
            bbox: o.bbox,
            owner: owners[&(n_obj + i)],
        })
        .collect();

    let mut edges = Vec::with_capacity(n_obj * n_obj + 3 * ocrs.len());
    for src in &object_nodes {
        for dst in &object_nodes {
            let relation = classify_relation(&src.bbox, &dst.bbox, src.id == dst.id);
            edges.push(Edge {
                src: src.id,
                relation,
                dst: dst.id,
            });
        }
    }
    for attr in &attribute_nodes {
        edges.push(Edge {
            src: attr.id,
            relation: RelationType::SelfRel,
            dst: attr.id,
        });
        edges.push(Edge {
            src: attr.owner,
            relation: RelationType::Surrounding,
            dst: attr.id,
        });
        edges.push(Edge {
            src: attr.id,
            relation: RelationType::Inside,
            dst: attr.owner,
        });
    }
    Ok(SceneGraph {
        objects: object_nodes,
        attributes: attribute_nodes,
        edges,
    })
}

impl SceneGraph {
    pub fn node_count(&self) -> usize {
        self.objects.len() + self.attributes.len()
    }

    /// Node ids in adjacency order: objects by id, then attributes by id.
    pub fn node_order(&self) -> Vec<usize> {
        let mut objs: Vec<usize> = self.objects.iter().map(|o| o.id).collect();
        let mut attrs: Vec<usize> = self.attributes.iter().map(|a| a.id).collect();
        objs.sort_unstable();
        attrs.sort_unstable();
        objs.extend(attrs);
        objs
    }

    pub fn adjacency_matrix(&self) -> AdjacencyMatrix {
        let order = self.node_order();
        let index: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let n = order.len();
        let mut labels = vec![0u8; n * n];
        for e in &self.edges {
            labels[index[&e.src] * n + index[&e.dst]] = e.relation.label();
        }
        AdjacencyMatrix { n, labels }
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, u8, usize)> {
        self.edges.iter().map(|e| (e.src, e.relation.label(), e.dst)).collect()
    }

    /// Checks every structural invariant of a scene graph.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::contract(msg));
        if self.objects.len() > MAX_SG_OBJECTS || self.attributes.len() > MAX_SG_ATTRIBUTES {
            return bad(format!(
                "scene graph has {} objects / {} attributes, limits are {MAX_SG_OBJECTS} / {MAX_SG_ATTRIBUTES}",
                self.objects.len(),
                self.attributes.len()
            ));
        }
        let obj_ids: BTreeSet<usize> = self.objects.iter().map(|o| o.id).collect();
        let attr_ids: BTreeSet<usize> = self.attributes.iter().map(|a| a.id).collect();
        if obj_ids.len() != self.objects.len()
            || attr_ids.len() != self.attributes.len()
            || !obj_ids.is_disjoint(&attr_ids)
        {
            return bad("node ids are not unique".into());
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let known = |id| obj_ids.contains(&id) || attr_ids.contains(&id);
            if !known(e.src) || !known(e.dst) {
                return bad(format!("edge {e:?} references an unknown node"));
            }
            if !seen.insert((e.src, e.dst)) {
                return bad(format!("duplicate edge between {} and {}", e.src, e.dst));
            }
            if (e.src == e.dst) != (e.relation == RelationType::SelfRel) {
                return bad(format!("edge {e:?} misuses the self relation"));
            }
        }
        for id in obj_ids.iter().chain(&attr_ids) {
            if !seen.contains(&(*id, *id)) {
                return bad(format!("node {id} lacks a self edge"));
            }
        }
        for &a in &obj_ids {
            for &b in &obj_ids {
                if !seen.contains(&(a, b)) {
                    return bad(format!("missing edge between objects {a} and {b}"));
                }
            }
        }
        let set = self.edge_set();
        for attr in &self.attributes {
            if !obj_ids.contains(&attr.owner) {
                return bad(format!("attribute {} has unknown owner {}", attr.id, attr.owner));
            }
            let down = (attr.owner, RelationType::Surrounding.label(), attr.id);
            let up = (attr.id, RelationType::Inside.label(), attr.owner);
            if !set.contains(&down) || !set.contains(&up) {
                return bad(format!("attribute {} is not linked to its owner", attr.id));
            }
        }
        let expected = obj_ids.len() * obj_ids.len() + 3 * attr_ids.len();
        if self.edges.len() != expected {
            return bad(format!(
                "attribute nodes carry extra edges ({} edges, expected {expected})",
                self.edges.len()
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and validates; errors carry the JSON path of the offending value.
    pub fn from_json(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let sg: SceneGraph = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        sg.validate().map_err(|e| Error::Parse {
            path: ".".into(),
            message: e.to_string(),
        })?;
        Ok(sg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn obj(class: &str, b: BoundingBox) -> SceneObject {
        SceneObject {
            class: class.into(),
            bbox: b,
        }
    }

    fn ocr(text: &str, b: BoundingBox) -> SceneOcr {
        SceneOcr {
            text: text.into(),
            bbox: b,
        }
    }

    fn three_objects() -> Vec<SceneObject> {
        vec![
            obj("sign", bb(0.0, 0.0, 0.2, 0.2)),
            obj("car", bb(0.5, 0.0, 0.7, 0.2)),
            obj("shirt", bb(0.1, 0.6, 0.3, 0.9)),
        ]
    }

    #[test]
    fn assign_single_container() {
        let owners = assign_ocr_attributes(&[(0, bb(0.0, 0.0, 0.5, 0.5)), (1, bb(0.6, 0.6, 0.9, 0.9))], &[(7, bb(0.1, 0.1, 0.2, 0.2))]).unwrap();
        assert_eq!(owners[&7], 0);
    }

    #[test]
    fn assign_prefers_tighter_container() {
        let objects = [(0, bb(0.0, 0.0, 1.0, 1.0)), (1, bb(0.1, 0.1, 0.5, 0.5))];
        let owners = assign_ocr_attributes(&objects, &[(5, bb(0.2, 0.2, 0.3, 0.3))]).unwrap();
        assert_eq!(owners[&5], 1);
    }

    #[test]
    fn assign_fallbacks() {
        // Partial overlap only: max IoU.
        let objects = [(0, bb(0.0, 0.0, 0.3, 0.3)), (1, bb(0.25, 0.25, 0.6, 0.6))];
        let owners = assign_ocr_attributes(&objects, &[(9, bb(0.2, 0.2, 0.4, 0.4))]).unwrap();
        let (i0, i1) = (iou(&objects[0].1, &bb(0.2, 0.2, 0.4, 0.4)), iou(&objects[1].1, &bb(0.2, 0.2, 0.4, 0.4)));
        assert_eq!(owners[&9], if i0 >= i1 { 0 } else { 1 });
        // No overlap at all: nearest center.
        let owners = assign_ocr_attributes(&objects, &[(9, bb(0.8, 0.8, 0.9, 0.9))]).unwrap();
        assert_eq!(owners[&9], 1);
        // Equidistant: lowest id.
        let objects = [(4, bb(0.0, 0.4, 0.2, 0.6)), (2, bb(0.8, 0.4, 1.0, 0.6))];
        let owners = assign_ocr_attributes(&objects, &[(9, bb(0.45, 0.45, 0.55, 0.55))]).unwrap();
        assert_eq!(owners[&9], 2);
    }

    #[test]
    fn assign_without_objects_is_error() {
        assert!(matches!(assign_ocr_attributes(&[], &[(0, bb(0.1, 0.1, 0.2, 0.2))]), Err(Error::Contract(_))));
    }

    #[test]
    fn three_objects_no_ocr() {
        let sg = build_scene_graph(&three_objects(), &[]).unwrap();
        let selfs = sg.edges.iter().filter(|e| e.relation == RelationType::SelfRel).count();
        assert_eq!(selfs, 3);
        assert_eq!(sg.edges.len() - selfs, 6);
        sg.validate().unwrap();
    }

    #[test]
    fn one_object_one_ocr() {
        let sg = build_scene_graph(&[obj("can", bb(0.1, 0.1, 0.5, 0.5))], &[ocr("coors", bb(0.2, 0.2, 0.3, 0.3))]).unwrap();
        let expected: BTreeSet<(usize, u8, usize)> = [(0, 12, 0), (1, 12, 1), (0, 2, 1), (1, 1, 0)].into();
        assert_eq!(sg.edge_set(), expected);
        assert_eq!(sg.adjacency_matrix().rows(), vec![vec![12, 2], vec![1, 12]]);
    }

    #[test]
    fn adjacency_examples() {
        let sg = build_scene_graph(&[obj("can", bb(0.1, 0.1, 0.5, 0.5))], &[]).unwrap();
        assert_eq!(sg.adjacency_matrix().rows(), vec![vec![12]]);

        let ocrs = [ocr("a", bb(0.01, 0.01, 0.05, 0.05)), ocr("b", bb(0.55, 0.05, 0.6, 0.1))];
        let sg = build_scene_graph(&three_objects(), &ocrs).unwrap();
        let adj = sg.adjacency_matrix();
        let off_diag = (0..adj.len())
            .flat_map(|i| (0..adj.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && adj.get(i, j) != 0)
            .count();
        let non_self = sg.edges.iter().filter(|e| e.relation != RelationType::SelfRel).count();
        assert_eq!(off_diag, non_self);
        assert!((0..adj.len()).all(|i| adj.get(i, i) == 12));
        assert_eq!(adj, sg.adjacency_matrix());
    }

    #[test]
    fn truncates_to_caps() {
        let objects: Vec<SceneObject> = (0..40)
            .map(|i| obj(&format!("o{i}"), bb(0.01 * i as f64, 0.0, 0.01 * i as f64 + 0.05, 0.1)))
            .collect();
        let ocrs: Vec<SceneOcr> = (0..105).map(|i| ocr(&format!("t{i}"), bb(0.0, 0.5, 0.02, 0.52))).collect();
        let sg = build_scene_graph(&objects, &ocrs).unwrap();
        assert_eq!(sg.objects.len(), MAX_SG_OBJECTS);
        assert_eq!(sg.attributes.len(), MAX_SG_ATTRIBUTES);
        assert_eq!(sg.objects[35].class, "o35");
        assert_eq!(sg.attributes[99].text, "t99");
        sg.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_errors() {
        let graphs = [
            build_scene_graph(&three_objects(), &[]).unwrap(),
            build_scene_graph(&[obj("can", bb(0.1, 0.1, 0.5, 0.5))], &[ocr("coors", bb(0.2, 0.2, 0.3, 0.3))]).unwrap(),
            build_scene_graph(&[obj("can", bb(0.1, 0.1, 0.5, 0.5))], &[]).unwrap(),
        ];
        for sg in &graphs {
            assert_eq!(&SceneGraph::from_json(&sg.to_json().unwrap()).unwrap(), sg);
        }
        let json = r#"{"objects":[{"id":0,"class":"a","bbox":[0.1,0.1,0.2,0.2]}],"attributes":[],"edges":[[0,13,0]]}"#;
        match SceneGraph::from_json(json) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "edges[0][1]"),
            other => panic!("expected parse error, got {other:?}"),
        }
        let json = r#"{"objects":[{"id":0,"class":"a","bbox":[0.3,0.1,0.2,0.2]}],"attributes":[],"edges":[]}"#;
        match SceneGraph::from_json(json) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "objects[0].bbox"),
            other => panic!("expected parse error, got {other:?}"),
        }
        let missing_self = r#"{"objects":[{"id":0,"class":"a","bbox":[0.1,0.1,0.2,0.2]}],"attributes":[],"edges":[]}"#;
        assert!(matches!(SceneGraph::from_json(missing_self), Err(Error::Parse { .. })));
    }
}
