//! A second, deliberately naive scene-graph builder used to cross-check
//! [`build_scene_graph`](super::build_scene_graph). It shares no geometry
//! code with the main builder: directions come from `atan2` sectors and
//! areas from raw coordinate arithmetic.

use std::collections::BTreeSet;

use super::geometry::BoundingBox;
use super::graph::{SceneObject, SceneOcr, MAX_SG_ATTRIBUTES, MAX_SG_OBJECTS};

type Coords = [f64; 4];

fn area(b: Coords) -> f64 {
    (b[2] - b[0]) * (b[3] - b[1])
}

fn overlap(a: Coords, b: Coords) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    w * h
}

fn jaccard(a: Coords, b: Coords) -> f64 {
    let i = overlap(a, b);
    if i > 0.0 {
        i / (area(a) + area(b) - i)
    } else {
        0.0
    }
}

fn encloses(outer: Coords, inner: Coords) -> bool {
    outer[0] < inner[0] && outer[1] < inner[1] && outer[2] > inner[2] && outer[3] > inner[3]
}

fn label(src: Coords, dst: Coords, same: bool) -> u8 {
    if same {
        return 12;
    }
    if encloses(src, dst) {
        return 2;
    }
    if encloses(dst, src) {
        return 1;
    }
    if overlap(src, dst) > 0.0 {
        return 11;
    }
    let dx = (dst[0] + dst[2]) / 2.0 - (src[0] + src[2]) / 2.0;
    let dy = (dst[1] + dst[3]) / 2.0 - (src[1] + src[3]) / 2.0;
    let deg = dy.atan2(dx).to_degrees();
    // Sectors listed counter-clockwise in image coordinates (y down).
    if deg.abs() <= 22.5 {
        3
    } else if deg > 22.5 && deg < 67.5 {
        8
    } else if (67.5..=112.5).contains(&deg) {
        5
    } else if deg > 112.5 && deg < 157.5 {
        10
    } else if deg.abs() >= 157.5 {
        4
    } else if deg < -22.5 && deg > -67.5 {
        7
    } else if (-112.5..=-67.5).contains(&deg) {
        6
    } else {
        9
    }
}

fn owner_of(ocr: Coords, objects: &[Coords]) -> usize {
    let contained: Vec<usize> = (0..objects.len()).filter(|&i| encloses(objects[i], ocr)).collect();
    let pool: Vec<usize> = if contained.is_empty() {
        (0..objects.len()).collect()
    } else {
        contained
    };
    let top = pool.iter().map(|&i| jaccard(objects[i], ocr)).fold(f64::MIN, f64::max);
    if top > 0.0 {
        return *pool.iter().find(|&&i| jaccard(objects[i], ocr) == top).unwrap();
    }
    let dist = |i: usize| {
        let o = objects[i];
        let dx = (o[0] + o[2]) / 2.0 - (ocr[0] + ocr[2]) / 2.0;
        let dy = (o[1] + o[3]) / 2.0 - (ocr[1] + ocr[3]) / 2.0;
        (dx * dx + dy * dy).sqrt()
    };
    let near = (0..objects.len()).map(dist).fold(f64::MAX, f64::min);
    (0..objects.len()).find(|&i| dist(i) == near).unwrap()
}

/// Edge triplets `(src, label, dst)` and attribute owners `(attr_id, owner_id)`.
pub fn brute_force_graph(
    objects: &[SceneObject],
    ocrs: &[SceneOcr],
) -> (BTreeSet<(usize, u8, usize)>, Vec<(usize, usize)>) {
    let objs: Vec<Coords> = objects.iter().take(MAX_SG_OBJECTS).map(|o| o.bbox.coords()).collect();
    let texts: Vec<Coords> = ocrs.iter().take(MAX_SG_ATTRIBUTES).map(|o| o.bbox.coords()).collect();
    let n = objs.len();
    let mut edges = BTreeSet::new();
    let mut owners = Vec::new();
    for i in 0..n {
        for j in 0..n {
            edges.insert((i, label(objs[i], objs[j], i == j), j));
        }
    }
    if n == 0 {
        return (edges, owners);
    }
    for (k, &t) in texts.iter().enumerate() {
        let id = n + k;
        let owner = owner_of(t, &objs);
        owners.push((id, owner));
        edges.insert((id, 12, id));
        edges.insert((owner, 2, id));
        edges.insert((id, 1, owner));
    }
    (edges, owners)
}

/// Direction-only label for two boxes, exposed for sweep tests.
pub fn brute_force_label(src: &BoundingBox, dst: &BoundingBox, same_entity: bool) -> u8 {
    label(src.coords(), dst.coords(), same_entity)
}
