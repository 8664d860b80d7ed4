//! Episode records and their rendering as ASCII or SVG frames.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::episode::{EpisodeResult, EpisodeTrace};
use crate::geometry::{Cell, Heading};
use crate::scene::{scene_from_json, scene_to_json, Scene, TaskSpec};

pub const RECORD_VERSION: u32 = 1;

/// Everything needed to redraw one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub version: u32,
    /// The scene in its file format.
    pub scene: serde_json::Value,
    pub task: TaskSpec,
    pub result: EpisodeResult,
    pub trace: EpisodeTrace,
}

impl EpisodeRecord {
    pub fn new(scene: &Scene, task: &TaskSpec, result: &EpisodeResult, trace: &EpisodeTrace) -> EpisodeRecord {
        EpisodeRecord {
            version: RECORD_VERSION,
            scene: serde_json::from_str(&scene_to_json(scene)).expect("scene json is valid"),
            task: task.clone(),
            result: result.clone(),
            trace: trace.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<EpisodeRecord> {
        let rec: EpisodeRecord = serde_json::from_str(text).map_err(|e| Error::BadRecord(e.to_string()))?;
        rec.check()?;
        Ok(rec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EpisodeRecord> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EpisodeRecord::from_json(&text)
    }

    pub fn scene(&self) -> Result<Scene> {
        scene_from_json(&self.scene.to_string()).map_err(|e| Error::BadRecord(format!("scene: {e}")))
    }

    fn check(&self) -> Result<()> {
        if self.version != RECORD_VERSION {
            return Err(Error::BadRecord(format!("unsupported version {}", self.version)));
        }
        let scene = self.scene()?;
        let n = self.task.agent_spawns.len();
        if self.trace.frames.is_empty() {
            return Err(Error::BadRecord("no frames".into()));
        }
        for (i, f) in self.trace.frames.iter().enumerate() {
            if f.round != i {
                return Err(Error::BadRecord(format!("frame {i} has round {}", f.round)));
            }
            if f.poses.len() != n || f.actions.len() != n || f.subgoals.len() != n {
                return Err(Error::BadRecord(format!("frame {i} does not have {n} agents")));
            }
            if let Some(p) = f.poses.iter().find(|p| !scene.dims().contains(p.cell)) {
                return Err(Error::BadRecord(format!("frame {i} pose ({}, {}) off the map", p.cell.x, p.cell.y)));
            }
        }
        if self.result.found_events.iter().any(|e| e.agent >= n || e.step >= self.trace.frames.len()) {
            return Err(Error::BadRecord("found event outside the trace".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.trace.frames.len() - 1
    }
}

fn heading_glyph(h: Heading) -> char {
    match h {
        Heading::East => '>',
        Heading::South => 'v',
        Heading::West => '<',
        Heading::North => '^',
    }
}

/// One ASCII grid per frame. Legend: `#` wall, `o` object, `T` target
/// object, `+` sub-goal, `0`-`4` agents, `.` free.
pub fn text_frames(rec: &EpisodeRecord) -> Result<Vec<String>> {
    rec.check()?;
    let scene = rec.scene()?;
    let dims = scene.dims();
    let base: Vec<char> = dims
        .cells()
        .map(|c| {
            if scene.is_wall(c) {
                '#'
            } else if let Some(o) = scene.object_at(c) {
                if rec.task.targets.contains(&o.category) {
                    'T'
                } else {
                    'o'
                }
            } else {
                '.'
            }
        })
        .collect();
    let mut frames = Vec::with_capacity(rec.trace.frames.len());
    for f in &rec.trace.frames {
        let mut grid = base.clone();
        for g in f.subgoals.iter().flatten() {
            if dims.contains(*g) {
                grid[dims.index(*g)] = '+';
            }
        }
        for (i, p) in f.poses.iter().enumerate() {
            grid[dims.index(p.cell)] = char::from_digit(i as u32, 10).unwrap_or('@');
        }
        let mut s = format!("round {}", f.round);
        for (i, (p, a)) in f.poses.iter().zip(&f.actions).enumerate() {
            let act = a.map(|a| a.name()).unwrap_or("-");
            let _ = write!(s, " | a{i} ({},{}) {} {}", p.cell.x, p.cell.y, heading_glyph(p.heading), act);
        }
        for e in rec.result.found_events.iter().filter(|e| e.step == f.round) {
            let _ = write!(s, " | found {} by a{}", e.category, e.agent);
        }
        s.push('\n');
        for row in grid.chunks(dims.l) {
            s.extend(row.iter());
            s.push('\n');
        }
        frames.push(s);
    }
    Ok(frames)
}

const PX: usize = 6;
const COLORS: [&str; 5] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

fn center(c: Cell) -> (usize, usize) {
    (c.x as usize * PX + PX / 2, c.y as usize * PX + PX / 2)
}

/// Top-down SVG of the episode up to and including frame `upto`: walls,
/// objects, agent paths with per-step markers, sub-goals and found events.
pub fn svg_frame(rec: &EpisodeRecord, upto: usize) -> Result<String> {
    rec.check()?;
    if upto >= rec.trace.frames.len() {
        return Err(Error::BadRecord(format!("frame {upto} past the end")));
    }
    let scene = rec.scene()?;
    let dims = scene.dims();
    let (w, h) = (dims.l * PX, dims.w * PX);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<title>{} round {}</title>"#, xml_escape(&rec.result.task_id), upto);
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<g id="walls" fill="#333333">"##);
    for c in scene.wall_cells() {
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{PX}" height="{PX}"/>"#, c.x as usize * PX, c.y as usize * PX);
    }
    s.push_str("</g>\n<g id=\"objects\">\n");
    for o in scene.objects() {
        let target = rec.task.targets.contains(&o.category);
        let fill = if target { "#ffbf00" } else { "#bbbbbb" };
        let _ = writeln!(s, r#"<g class="object"><title>{}</title>"#, xml_escape(o.category.name()));
        for c in &o.footprint {
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{PX}" height="{PX}" fill="{fill}"/>"#,
                c.x as usize * PX,
                c.y as usize * PX
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</g>\n");
    let frames = &rec.trace.frames[..=upto];
    let n = rec.task.agent_spawns.len();
    for a in 0..n {
        let color = COLORS[a % COLORS.len()];
        let _ = writeln!(s, r#"<g id="agent{a}" stroke="{color}" fill="{color}">"#);
        let pts: Vec<String> = frames
            .iter()
            .map(|f| {
                let (x, y) = center(f.poses[a].cell);
                format!("{x},{y}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        for f in frames {
            let (x, y) = center(f.poses[a].cell);
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="1"/>"#);
        }
        if let Some(g) = frames.last().and_then(|f| f.subgoals[a]) {
            let (x, y) = center(g);
            let d = PX;
            let _ = writeln!(
                s,
                r#"<path class="subgoal" fill="none" stroke-width="1" d="M{} {} L{} {} M{} {} L{} {}"/>"#,
                x - d,
                y - d,
                x + d,
                y + d,
                x - d,
                y + d,
                x + d,
                y - d
            );
        }
        let (x, y) = center(frames[frames.len() - 1].poses[a].cell);
        let _ = writeln!(s, r##"<circle class="pose" cx="{x}" cy="{y}" r="{}" stroke="#000000"/>"##, PX);
        s.push_str("</g>\n");
    }
    s.push_str("<g id=\"found\" fill=\"none\" stroke=\"#000000\" stroke-width=\"2\">\n");
    for e in rec.result.found_events.iter().filter(|e| e.step <= upto) {
        let (x, y) = center(rec.trace.frames[e.step].poses[e.agent].cell);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}"><title>{} found by agent {}</title></rect>"#,
            x.saturating_sub(PX * 2),
            y.saturating_sub(PX * 2),
            PX * 4,
            PX * 4,
            xml_escape(e.category.name()),
            e.agent
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

/// One SVG per frame.
pub fn svg_frames(rec: &EpisodeRecord) -> Result<Vec<String>> {
    (0..rec.trace.frames.len()).map(|i| svg_frame(rec, i)).collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::episode::{run_episode, EpisodeConfig, Policies};
    use crate::geometry::Dims;
    use crate::priors::PriorGraph;
    use crate::scene::{generate_scene, sample_task, GenParams};

    fn record(max_steps: usize) -> EpisodeRecord {
        let params = GenParams {
            dims: Dims::new(40, 40),
            rooms: 1,
            ..GenParams::default()
        };
        let scene = generate_scene(4, &params).unwrap();
        let task = sample_task(&scene, 1, 2, 1).unwrap();
        let cfg = EpisodeConfig {
            max_steps,
            record_trace: true,
            variant: crate::policy::Variant::new(crate::policy::PolicyKind::Greedy).no_comm(),
            ..EpisodeConfig::default()
        };
        let graph = PriorGraph::empty();
        let pol = Policies {
            graph: &graph,
            codec: None,
            model: None,
        };
        let out = run_episode(&scene, &task, "t", pol, &cfg, 2).unwrap();
        EpisodeRecord::new(&scene, &task, &out.result, out.trace.as_ref().unwrap())
    }

    #[test]
    fn text_frame_count_is_steps_plus_one() {
        let rec = record(40);
        let frames = text_frames(&rec).unwrap();
        assert_eq!(frames.len(), rec.result.d + 1);
        assert_eq!(frames.len(), rec.steps() + 1);
        assert!(frames[0].starts_with("round 0"));
    }

    #[test]
    fn zero_step_record_has_one_frame() {
        let mut rec = record(5);
        rec.trace.frames.truncate(1);
        rec.result.found_events.clear();
        assert_eq!(text_frames(&rec).unwrap().len(), 1);
        assert_eq!(svg_frames(&rec).unwrap().len(), 1);
    }

    #[test]
    fn record_round_trips_and_rejects_garbage() {
        let rec = record(20);
        assert_eq!(EpisodeRecord::from_json(&rec.to_json()).unwrap(), rec);
        assert!(matches!(EpisodeRecord::from_json("{}"), Err(Error::BadRecord(_))));
        let mut bad = rec.clone();
        bad.trace.frames[1].poses.pop();
        assert!(matches!(EpisodeRecord::from_json(&bad.to_json()), Err(Error::BadRecord(_))));
    }

    #[test]
    fn svg_is_well_formed_xml() {
        let rec = record(30);
        let last = rec.trace.frames.len() - 1;
        let svg = svg_frame(&rec, last).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let agents = doc.descendants().filter(|n| n.attribute("id").is_some_and(|id| id.starts_with("agent"))).count();
        assert_eq!(agents, 2);
    }
}
