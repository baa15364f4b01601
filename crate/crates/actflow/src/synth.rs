//! Deterministic synthetic corpus: three tasks, each done by one human and
//! one agent, with PNG screenshots, a manifest and a results file.

use std::path::{Path, PathBuf};

use actflow_core::trace::{AiUsage, EventKind};
use actflow_core::{Frame, RawEvent, Trajectory, WorkerMeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::artifacts::{to_json, write_atomic};
use crate::error::{Error, Result};
use crate::frames::write_png;
use crate::session::write_session;

pub const DEFAULT_SEED: u64 = 7;
const WIDTH: u32 = 64;
const HEIGHT: u32 = 48;

#[derive(Debug, Clone, Copy)]
enum Act {
    Click(&'static str),
    DoubleClick(&'static str),
    Type(&'static str),
    Scroll(usize),
    Run(&'static str),
    Python(&'static str),
    Edit(&'static str),
    Browse(&'static str),
    Search(&'static str),
}

struct Scene {
    app: &'static str,
    acts: &'static [Act],
}

struct Spec {
    file: &'static str,
    task_id: &'static str,
    instruction: &'static str,
    skill: &'static str,
    worker: fn() -> WorkerMeta,
    scenes: &'static [Scene],
    success: bool,
    cost_usd: f64,
}

fn color(app: &str) -> [f32; 3] {
    match app {
        "Finder" => [0.85, 0.85, 0.88],
        "Excel" => [0.16, 0.52, 0.28],
        "Word" => [0.18, 0.33, 0.75],
        "PowerPoint" => [0.80, 0.33, 0.18],
        "Google Chrome" => [0.97, 0.97, 0.97],
        "Terminal" => [0.06, 0.06, 0.08],
        "Jupyter" => [0.96, 0.62, 0.18],
        _ => [0.5, 0.5, 0.5],
    }
}

fn human(id: &'static str, usage: AiUsage) -> WorkerMeta {
    WorkerMeta {
        ai_usage: Some(usage),
        ..WorkerMeta::human(id)
    }
}

fn agent(id: &'static str) -> WorkerMeta {
    WorkerMeta {
        backbone: Some("gpt-4o".into()),
        ..WorkerMeta::agent(id, "openhands")
    }
}

use Act::*;

const SPECS: [Spec; 6] = [
    Spec {
        file: "sales_report.human",
        task_id: "ds-sales-report",
        instruction: "Analyze the sales data and report the top region",
        skill: "data analysis",
        worker: || human("h1", AiUsage::Independent),
        scenes: &[
            Scene {
                app: "Finder",
                acts: &[Click("data folder"), DoubleClick("sales.xlsx")],
            },
            Scene {
                app: "Excel",
                acts: &[
                    Click("region column"),
                    Click("sort button"),
                    Scroll(5),
                    Click("total cell"),
                    Type("=SUM(B2:B40)"),
                    Click("insert chart"),
                    Click("bar chart"),
                ],
            },
            Scene {
                app: "Word",
                acts: &[
                    Click("report body"),
                    Type("Top region: West"),
                    Click("save button"),
                ],
            },
        ],
        success: true,
        cost_usd: 24.79,
    },
    Spec {
        file: "sales_report.agent",
        task_id: "ds-sales-report",
        instruction: "Analyze the sales data and report the top region",
        skill: "data analysis",
        worker: || agent("a1"),
        scenes: &[
            Scene {
                app: "Terminal",
                acts: &[Run("ls data"), Run("head data/sales.csv")],
            },
            Scene {
                app: "Jupyter",
                acts: &[
                    Python("import pandas as pd; df = pd.read_csv('data/sales.csv')"),
                    Python("df.groupby('region').sales.sum().sort_values()"),
                    Python("df.plot.bar(x='region', y='sales')"),
                ],
            },
            Scene {
                app: "Terminal",
                acts: &[Edit("report.md"), Run("cat report.md")],
            },
        ],
        success: true,
        cost_usd: 0.94,
    },
    Spec {
        file: "quarterly_deck.human",
        task_id: "slides-quarterly-deck",
        instruction: "Create the slide deck for the quarterly review",
        skill: "design",
        worker: || human("h2", AiUsage::Augmentation),
        scenes: &[
            Scene {
                app: "PowerPoint",
                acts: &[
                    Click("new slide"),
                    Click("title box"),
                    Type("Quarterly Review"),
                    Click("new slide"),
                    Click("body box"),
                    Type("Revenue grew 12%"),
                ],
            },
            Scene {
                app: "Google Chrome",
                acts: &[
                    Click("address bar"),
                    Type("company logo png"),
                    Scroll(3),
                    Click("logo image"),
                ],
            },
            Scene {
                app: "PowerPoint",
                acts: &[
                    Click("insert picture"),
                    DoubleClick("logo image"),
                    Click("save button"),
                ],
            },
        ],
        success: true,
        cost_usd: 18.5,
    },
    Spec {
        file: "quarterly_deck.agent",
        task_id: "slides-quarterly-deck",
        instruction: "Create the slide deck for the quarterly review",
        skill: "design",
        worker: || agent("a2"),
        scenes: &[
            Scene {
                app: "Jupyter",
                acts: &[
                    Python("from pptx import Presentation; prs = Presentation()"),
                    Python("slide = prs.slides.add_slide(prs.slide_layouts[0])"),
                ],
            },
            Scene {
                app: "Google Chrome",
                acts: &[Browse("https://example.com/brand/logo.png")],
            },
            Scene {
                app: "Jupyter",
                acts: &[
                    Python("slide.shapes.add_picture('logo.png', 0, 0)"),
                    Python("prs.save('deck.pptx')"),
                ],
            },
        ],
        success: false,
        cost_usd: 2.39,
    },
    Spec {
        file: "energy_memo.human",
        task_id: "writing-energy-memo",
        instruction: "Research renewable energy statistics and write a memo",
        skill: "writing",
        worker: || human("h3", AiUsage::Independent),
        scenes: &[
            Scene {
                app: "Google Chrome",
                acts: &[
                    Click("search box"),
                    Type("renewable energy statistics 2024"),
                    Scroll(6),
                    Click("agency report"),
                    Scroll(4),
                ],
            },
            Scene {
                app: "Word",
                acts: &[
                    Click("memo body"),
                    Type("Solar capacity doubled"),
                    Click("bold button"),
                    Click("save button"),
                ],
            },
        ],
        success: true,
        cost_usd: 12.0,
    },
    Spec {
        file: "energy_memo.agent",
        task_id: "writing-energy-memo",
        instruction: "Research renewable energy statistics and write a memo",
        skill: "writing",
        worker: || agent("a3"),
        scenes: &[
            Scene {
                app: "Google Chrome",
                acts: &[
                    Search("renewable energy statistics 2024"),
                    Browse("https://example.org/energy/report"),
                ],
            },
            Scene {
                app: "Terminal",
                acts: &[Edit("memo.md"), Run("wc -w memo.md")],
            },
        ],
        success: true,
        cost_usd: 0.61,
    },
];

struct Builder<'a> {
    rng: ChaCha8Rng,
    t: f64,
    events: Vec<RawEvent>,
    dir: &'a Path,
    stem: &'a str,
    app: &'static str,
}

impl Builder<'_> {
    fn push(&mut self, gap: f64, e: RawEvent) -> Result<()> {
        if !self.events.is_empty() {
            self.t += gap;
        }
        let i = self.events.len();
        let rel = format!("{}_frames/{i:03}.png", self.stem);
        let mut f = Frame::filled(WIDTH, HEIGHT, color(self.app));
        let (x, y) = (
            self.rng.random_range(0..WIDTH - 4),
            self.rng.random_range(0..HEIGHT - 4),
        );
        let shade = self.rng.random_range(0.3f32..0.7);
        f.fill_rect(x, y, x + 4, y + 4, [shade; 3]);
        let path = self.dir.join(&rel);
        if i == 0 {
            let parent = path.parent().unwrap_or(self.dir);
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_png(&f, &path).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        let e = RawEvent {
            index: i,
            timestamp: self.t,
            ..e
        }
        .with_app(self.app)
        .with_screenshot(&rel);
        self.events.push(e);
        Ok(())
    }

    fn gap(&mut self, lo: f64, hi: f64) -> f64 {
        let g: f64 = self.rng.random_range(lo..hi);
        (g * 1000.0).round() / 1000.0
    }

    fn point(&mut self) -> (i64, i64) {
        (
            self.rng.random_range(0..1280),
            self.rng.random_range(0..800),
        )
    }

    fn act(&mut self, a: Act) -> Result<()> {
        let human = |b: &mut Self| b.gap(0.8, 2.5);
        let agent = |b: &mut Self| b.gap(3.0, 9.0);
        match a {
            Click(el) => {
                let (x, y) = self.point();
                let g = human(self);
                self.push(g, RawEvent::click(0, 0.0, x, y).with_arg("element", el))
            }
            DoubleClick(el) => {
                let (x, y) = self.point();
                let g = human(self);
                self.push(g, RawEvent::click(0, 0.0, x, y).with_arg("element", el))?;
                self.push(
                    0.06,
                    RawEvent::click(0, 0.0, x + 1, y).with_arg("element", el),
                )
            }
            Type(text) => {
                for (k, ch) in text.chars().enumerate() {
                    let g = if k == 0 {
                        human(self)
                    } else {
                        self.gap(0.08, 0.2)
                    };
                    self.push(g, RawEvent::keypress(0, 0.0, &ch.to_string()))?;
                }
                Ok(())
            }
            Scroll(n) => {
                for k in 0..n {
                    let g = if k == 0 {
                        human(self)
                    } else {
                        self.gap(0.05, 0.15)
                    };
                    self.push(g, RawEvent::scroll(0, 0.0, -3))?;
                }
                Ok(())
            }
            Run(cmd) => {
                let g = agent(self);
                self.push(
                    g,
                    RawEvent::new(0, 0.0, EventKind::Run).with_arg("command", cmd),
                )
            }
            Python(code) => {
                let g = agent(self);
                self.push(
                    g,
                    RawEvent::new(0, 0.0, EventKind::RunIpython).with_arg("code", code),
                )
            }
            Edit(path) => {
                let g = agent(self);
                self.push(
                    g,
                    RawEvent::new(0, 0.0, EventKind::Edit).with_arg("path", path),
                )
            }
            Browse(url) => {
                let g = agent(self);
                self.push(
                    g,
                    RawEvent::new(0, 0.0, EventKind::BrowseInteractive).with_arg("url", url),
                )
            }
            Search(q) => {
                let g = agent(self);
                self.push(
                    g,
                    RawEvent::new(0, 0.0, EventKind::Search).with_arg("query", q),
                )
            }
        }
    }
}

/// Writes the corpus into `dir` and returns the manifest path. The same seed
/// always produces byte-identical files.
pub fn write_corpus(dir: &Path, seed: u64) -> Result<PathBuf> {
    let mut entries = Vec::new();
    let mut results = String::from("task_id,worker_id,success,cost_usd\n");
    for (n, spec) in SPECS.iter().enumerate() {
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64)),
            t: 0.0,
            events: Vec::new(),
            dir,
            stem: spec.file,
            app: spec.scenes[0].app,
        };
        for scene in spec.scenes {
            b.app = scene.app;
            for a in scene.acts {
                b.act(*a)?;
            }
        }
        let worker = (spec.worker)();
        let tail = b.gap(2.0, 6.0);
        let mut t = Trajectory::new(spec.task_id, worker.clone(), b.events);
        t.instruction = Some(spec.instruction.into());
        t.elapsed_seconds =
            ((t.events.last().map_or(0.0, |e| e.timestamp) + tail) * 1000.0).round() / 1000.0;
        t.provenance = "synthetic".into();
        let file = format!("{}.jsonl", spec.file);
        write_session(&t, &dir.join(&file))?;
        results.push_str(&format!(
            "{},{},{},{}\n",
            spec.task_id, worker.worker_id, spec.success, spec.cost_usd
        ));
        entries.push(json!({"path": file, "task_id": spec.task_id, "skill": spec.skill}));
    }
    write_atomic(&dir.join("results.csv"), results.as_bytes())?;
    let manifest = dir.join("manifest.json");
    write_atomic(
        &manifest,
        &to_json(&json!({
            "skills": crate::manifest::DEFAULT_SKILLS,
            "results": "results.csv",
            "trajectories": entries,
        })),
    )?;
    Ok(manifest)
}
