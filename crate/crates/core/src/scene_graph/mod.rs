//! Scene graphs over detected objects and OCR tokens.
//!
//! Object pairs are linked by one of 12 geometric relations; every OCR token
//! becomes an attribute node of the object that best contains it.

mod geometry;
mod graph;
pub mod oracle;

pub use geometry::{classify_relation, iou, BoundingBox, RelationType};
pub use graph::{
    assign_ocr_attributes, build_scene_graph, AdjacencyMatrix, AttributeNode, Edge, ObjectNode,
    SceneGraph, SceneObject, SceneOcr, MAX_SG_ATTRIBUTES, MAX_SG_OBJECTS,
};
