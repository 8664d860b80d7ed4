//! Category relation graph and the two-layer key-objects map built from it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::category::CategoryId;
use crate::error::{Error, Result};
use crate::geometry::{Cell, Dims};
use crate::scene::Scene;
use crate::semantic_map::SemanticMap;

/// Co-occurrence radius used when deriving a graph from scenes, in cells (1.0 m).
const NEAR_CELLS: i64 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEdge {
    pub a: CategoryId,
    pub b: CategoryId,
    pub relation: String,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriorGraph {
    nodes: BTreeSet<CategoryId>,
    edges: Vec<PriorEdge>,
}

impl PriorGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = CategoryId>,
        edges: Vec<PriorEdge>,
    ) -> Result<PriorGraph> {
        let mut nodes: BTreeSet<CategoryId> = nodes.into_iter().collect();
        let mut seen = BTreeSet::new();
        for e in &edges {
            if !(0.0..=1.0).contains(&e.weight) || e.weight.is_nan() {
                return Err(Error::WeightOutOfRange(e.weight));
            }
            if e.a == e.b {
                return Err(Error::InvariantViolation("edge-self-loop".into()));
            }
            if !seen.insert((e.a, e.b, e.relation.clone())) {
                return Err(Error::InvariantViolation("duplicate-edge".into()));
            }
            nodes.insert(e.a);
            nodes.insert(e.b);
        }
        Ok(PriorGraph { nodes, edges })
    }

    pub fn empty() -> PriorGraph {
        PriorGraph::default()
    }

    pub fn nodes(&self) -> &BTreeSet<CategoryId> {
        &self.nodes
    }

    pub fn edges(&self) -> &[PriorEdge] {
        &self.edges
    }

    pub fn without_edges(&self) -> PriorGraph {
        PriorGraph {
            nodes: self.nodes.clone(),
            edges: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeFile {
    a: String,
    b: String,
    #[serde(default = "near")]
    relation: String,
    weight: f64,
}

fn near() -> String {
    "near".into()
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    #[serde(default)]
    nodes: Vec<String>,
    #[serde(default)]
    edges: Vec<EdgeFile>,
}

pub fn prior_graph_from_json(text: &str) -> Result<PriorGraph> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::json("prior graph", &e))?;
    let nodes = file
        .nodes
        .iter()
        .map(|n| CategoryId::from_name(n))
        .collect::<Result<Vec<_>>>()?;
    let edges = file
        .edges
        .into_iter()
        .map(|e| {
            Ok(PriorEdge {
                a: CategoryId::from_name(&e.a)?,
                b: CategoryId::from_name(&e.b)?,
                relation: e.relation,
                weight: e.weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PriorGraph::new(nodes, edges)
}

pub fn prior_graph_to_json(graph: &PriorGraph) -> String {
    let file = GraphFile {
        nodes: graph.nodes.iter().map(|c| c.name().to_string()).collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeFile {
                a: e.a.name().into(),
                b: e.b.name().into(),
                relation: e.relation.clone(),
                weight: e.weight,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("graph serializes")
}

pub fn load_prior_graph(path: impl AsRef<Path>) -> Result<PriorGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    prior_graph_from_json(&text)
}

pub fn save_prior_graph(graph: &PriorGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, prior_graph_to_json(graph)).map_err(|e| Error::io(path, e))
}

struct Footprint {
    category: CategoryId,
    boundary: Vec<Cell>,
    lo: Cell,
    hi: Cell,
}

fn footprints(scene: &Scene) -> Vec<Footprint> {
    scene
        .objects()
        .iter()
        .map(|o| {
            let set: BTreeSet<Cell> = o.footprint.iter().copied().collect();
            let boundary: Vec<Cell> = o
                .footprint
                .iter()
                .copied()
                .filter(|c| c.neighbors4().iter().any(|n| !set.contains(n)))
                .collect();
            let lo = Cell::new(
                o.footprint.iter().map(|c| c.x).min().unwrap_or(0),
                o.footprint.iter().map(|c| c.y).min().unwrap_or(0),
            );
            let hi = Cell::new(
                o.footprint.iter().map(|c| c.x).max().unwrap_or(0),
                o.footprint.iter().map(|c| c.y).max().unwrap_or(0),
            );
            Footprint {
                category: o.category,
                boundary,
                lo,
                hi,
            }
        })
        .collect()
}

fn near_each_other(a: &Footprint, b: &Footprint) -> bool {
    let gap = |lo1: i32, hi1: i32, lo2: i32, hi2: i32| (lo2 - hi1).max(lo1 - hi2).max(0) as i64;
    let gx = gap(a.lo.x, a.hi.x, b.lo.x, b.hi.x);
    let gy = gap(a.lo.y, a.hi.y, b.lo.y, b.hi.y);
    if gx * gx + gy * gy > NEAR_CELLS * NEAR_CELLS {
        return false;
    }
    a.boundary
        .iter()
        .any(|p| b.boundary.iter().any(|q| p.dist2(*q) <= NEAR_CELLS * NEAR_CELLS))
}

/// Edge weight = fraction of scenes in which some instance of each category
/// lie within 1.0 m of each other (closest footprint cells).
pub fn derive_prior_graph(scenes: &[Scene], min_weight: f64) -> Result<PriorGraph> {
    if scenes.is_empty() {
        return Err(Error::EmptySceneList);
    }
    let mut nodes = BTreeSet::new();
    let mut hits: BTreeMap<(CategoryId, CategoryId), usize> = BTreeMap::new();
    for scene in scenes {
        let fps = footprints(scene);
        let mut pairs = BTreeSet::new();
        for (i, a) in fps.iter().enumerate() {
            nodes.insert(a.category);
            for b in &fps[i + 1..] {
                if a.category == b.category {
                    continue;
                }
                let key = (a.category.min(b.category), a.category.max(b.category));
                if !pairs.contains(&key) && near_each_other(a, b) {
                    pairs.insert(key);
                }
            }
        }
        for key in pairs {
            *hits.entry(key).or_default() += 1;
        }
    }
    let edges = hits
        .into_iter()
        .map(|((a, b), n)| PriorEdge {
            a,
            b,
            relation: near(),
            weight: n as f64 / scenes.len() as f64,
        })
        .filter(|e| e.weight >= min_weight)
        .collect();
    PriorGraph::new(nodes, edges)
}

/// Graph neighbours of the targets, excluding the targets.
pub fn related_categories(graph: &PriorGraph, targets: &[CategoryId]) -> BTreeSet<CategoryId> {
    let tset: BTreeSet<CategoryId> = targets.iter().copied().collect();
    let mut out = BTreeSet::new();
    for e in &graph.edges {
        if tset.contains(&e.a) {
            out.insert(e.b);
        }
        if tset.contains(&e.b) {
            out.insert(e.a);
        }
    }
    out.retain(|c| !tset.contains(c));
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyObjectsMap {
    dims: Dims,
    pub layer_targets: Vec<bool>,
    pub layer_related: Vec<bool>,
}

impl KeyObjectsMap {
    pub fn empty(dims: Dims) -> KeyObjectsMap {
        KeyObjectsMap {
            dims,
            layer_targets: vec![false; dims.area()],
            layer_related: vec![false; dims.area()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn is_target(&self, c: Cell) -> bool {
        self.layer_targets[self.dims.index(c)]
    }

    pub fn is_related(&self, c: Cell) -> bool {
        self.layer_related[self.dims.index(c)]
    }

    pub fn target_cells(&self) -> Vec<Cell> {
        cells_of(self.dims, &self.layer_targets)
    }

    pub fn related_cells(&self) -> Vec<Cell> {
        cells_of(self.dims, &self.layer_related)
    }
}

fn cells_of(dims: Dims, layer: &[bool]) -> Vec<Cell> {
    layer
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| dims.cell(i))
        .collect()
}

/// Channel bitmask for a category set.
pub fn category_mask(cats: impl IntoIterator<Item = CategoryId>) -> u32 {
    cats.into_iter().fold(0, |m, c| m | (1 << c.index()))
}

pub fn build_key_objects_map(
    sem: &SemanticMap,
    targets: &[CategoryId],
    graph: &PriorGraph,
) -> KeyObjectsMap {
    let related: Vec<CategoryId> = related_categories(graph, targets).into_iter().collect();
    let dims = sem.dims();
    let mut key = KeyObjectsMap::empty(dims);
    for c in dims.cells() {
        let counts = sem.cell_counts(c);
        let i = dims.index(c);
        key.layer_targets[i] = targets.iter().any(|k| counts[k.index()] > 0);
        key.layer_related[i] = related.iter().any(|k| counts[k.index()] > 0);
    }
    key
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, GenParams, HeightBand, ObjectInstance};
    use crate::semantic_map::{EXPLORED, OCCUPIED};

    fn cat(n: &str) -> CategoryId {
        CategoryId::from_name(n).unwrap()
    }

    const FIXTURE: &str = r#"{
  "nodes": [],
  "edges": [
    {"a": "Laptop", "b": "Desk", "relation": "on", "weight": 0.8},
    {"a": "Apple", "b": "CounterTop", "relation": "on", "weight": 0.6}
  ]
}"#;

    #[test]
    fn load_fixture() {
        let g = prior_graph_from_json(FIXTURE).unwrap();
        assert_eq!(g.nodes().len(), 4);
        assert_eq!(g.edges().len(), 2);
        let again = prior_graph_from_json(&prior_graph_to_json(&g)).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn bad_weight_and_unknown_category() {
        let text = FIXTURE.replace("0.8", "1.5");
        assert!(matches!(prior_graph_from_json(&text), Err(Error::WeightOutOfRange(w)) if w == 1.5));
        let text = FIXTURE.replace("Laptop", "Toaster");
        assert!(matches!(prior_graph_from_json(&text), Err(Error::UnknownCategory(_))));
        assert!(matches!(prior_graph_from_json("{"), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_edges_give_no_relations() {
        let g = prior_graph_from_json(r#"{"nodes":["Laptop"],"edges":[]}"#).unwrap();
        assert!(related_categories(&g, &[cat("Laptop")]).is_empty());
    }

    #[test]
    fn related_is_neighbour_union() {
        let e = |a: &str, b: &str| PriorEdge {
            a: cat(a),
            b: cat(b),
            relation: "near".into(),
            weight: 0.5,
        };
        let g = PriorGraph::new([], vec![e("Laptop", "Desk"), e("Box", "Laptop"), e("Apple", "Bowl")]).unwrap();
        let r = related_categories(&g, &[cat("Laptop")]);
        assert_eq!(r, [cat("Desk"), cat("Box")].into_iter().collect());
        assert!(related_categories(&g, &[]).is_empty());
        assert!(related_categories(&g, &[cat("Sofa")]).is_empty());
    }

    fn scene_with(objects: Vec<(&str, Vec<Cell>)>) -> Scene {
        let objs: Vec<ObjectInstance> = objects
            .into_iter()
            .enumerate()
            .map(|(i, (n, fp))| ObjectInstance {
                instance_id: i as u32,
                category: cat(n),
                footprint: fp,
                height_band: HeightBand::Eye,
            })
            .collect();
        let mut cats: Vec<CategoryId> = objs.iter().map(|o| o.category).collect();
        cats.sort();
        cats.dedup();
        Scene::new("fx", Dims::new(60, 10), vec![false; 600], objs, vec![Cell::new(0, 0)], cats).unwrap()
    }

    #[test]
    fn derive_uses_one_meter_rule() {
        let s = scene_with(vec![
            ("Desk", vec![Cell::new(3, 5), Cell::new(4, 5)]),
            ("Laptop", vec![Cell::new(2, 5)]),
            ("Box", vec![Cell::new(2, 0)]),
        ]);
        let g = derive_prior_graph(std::slice::from_ref(&s), 0.0).unwrap();
        let w = |a: &str, b: &str| {
            g.edges()
                .iter()
                .find(|e| (e.a, e.b) == (cat(a).min(cat(b)), cat(a).max(cat(b))))
                .map(|e| e.weight)
        };
        assert_eq!(w("Laptop", "Desk"), Some(1.0));
        assert_eq!(w("Laptop", "Box"), Some(1.0));

        let far = scene_with(vec![
            ("Laptop", vec![Cell::new(2, 5)]),
            ("Box", vec![Cell::new(22, 5)]),
            ("Bowl", vec![Cell::new(44, 5)]),
        ]);
        let g = derive_prior_graph(&[far], 0.0).unwrap();
        assert_eq!(g.edges().len(), 1, "20 cells is within range, 22 is not");
        assert!(derive_prior_graph(&[s], 1.1).unwrap().edges().is_empty());
        assert!(matches!(derive_prior_graph(&[], 0.0), Err(Error::EmptySceneList)));
    }

    #[test]
    fn derive_is_deterministic() {
        let scenes: Vec<Scene> = (0..10)
            .map(|s| generate_scene(s, &GenParams::default()).unwrap())
            .collect();
        let a = derive_prior_graph(&scenes, 0.2).unwrap();
        let b = derive_prior_graph(&scenes, 0.2).unwrap();
        assert_eq!(a, b);
        assert!(!a.edges().is_empty());
    }

    fn mark(map: &mut SemanticMap, c: Cell, k: CategoryId) {
        map.add(c, k.index(), 1);
        map.add(c, OCCUPIED, 1);
        map.add(c, EXPLORED, 1);
    }

    #[test]
    fn key_map_layers() {
        let dims = Dims::new(10, 10);
        let mut sem = SemanticMap::new(dims);
        mark(&mut sem, Cell::new(3, 4), cat("Laptop"));
        let key = build_key_objects_map(&sem, &[cat("Laptop")], &PriorGraph::empty());
        assert_eq!(key.target_cells(), vec![Cell::new(3, 4)]);
        assert!(key.related_cells().is_empty());

        let empty = build_key_objects_map(&SemanticMap::new(dims), &[cat("Laptop")], &PriorGraph::empty());
        assert!(empty.target_cells().is_empty() && empty.related_cells().is_empty());

        let g = PriorGraph::new(
            [],
            vec![PriorEdge {
                a: cat("Apple"),
                b: cat("Box"),
                relation: "near".into(),
                weight: 0.7,
            }],
        )
        .unwrap();
        let mut sem = SemanticMap::new(dims);
        mark(&mut sem, Cell::new(7, 1), cat("Box"));
        let key = build_key_objects_map(&sem, &[cat("Apple")], &g);
        assert_eq!(key.related_cells(), vec![Cell::new(7, 1)]);
        assert!(key.target_cells().is_empty());
        assert_eq!(build_key_objects_map(&sem, &[cat("Apple")], &g), key);
        let stripped = build_key_objects_map(&sem, &[cat("Apple")], &g.without_edges());
        assert!(stripped.related_cells().is_empty());
        assert_eq!(stripped.layer_targets, key.layer_targets);
    }
}
