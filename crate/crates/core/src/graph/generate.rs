// Copyright 2026 The Scopeflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Seeded synthetic graphs, so tests and benchmarks need no external data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::{EdgeTypeDef, GraphSchema, PropertyDef, VertexTypeDef};
use super::store::{GraphBuilder, PropertyGraph, Vid};
use super::value::{PropType, PropValue};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum GenSpec {
    /// `0 -> 1 -> ... -> n-1` over `knows`.
    Path { n: usize },
    /// Path closed back to vertex 0.
    Cycle { n: usize },
    /// Hub 0 knows every other vertex.
    Star { n: usize },
    /// Preferential attachment, `m` out-edges per new vertex.
    PowerLaw { n: usize, m: usize },
    /// A start person knowing `candidates` persons, each the creator of
    /// `items` posts; only the post at `match_pos` (1-based) carries the
    /// `#ABC` tag.
    HeavyTweeter { candidates: usize, items: usize, match_pos: usize },
    /// LDBC-shaped social graph (persons, companies, posts, tags, tag classes).
    Social { persons: usize, avg_knows: usize, companies: usize, posts_per_person: usize, tags: usize },
}

fn prop(name: &str, ty: PropType) -> PropertyDef {
    PropertyDef { name: name.to_string(), ty }
}

fn vtype(name: &str, props: Vec<PropertyDef>) -> VertexTypeDef {
    VertexTypeDef { name: name.to_string(), file: None, properties: props }
}

fn etype(label: &str, src: &str, dst: &str) -> EdgeTypeDef {
    EdgeTypeDef { label: label.to_string(), src: src.to_string(), dst: dst.to_string(), file: None, properties: vec![] }
}

/// Schema of the one-type graphs (path, cycle, star, power-law).
pub fn person_schema() -> GraphSchema {
    GraphSchema {
        vertices: vec![vtype("Person", vec![prop("name", PropType::String), prop("age", PropType::Int)])],
        edges: vec![etype("knows", "Person", "Person")],
    }
}

/// Schema shared by the social and heavy-tweeter graphs.
pub fn social_schema() -> GraphSchema {
    GraphSchema {
        vertices: vec![
            vtype("Person", vec![prop("name", PropType::String), prop("age", PropType::Int)]),
            vtype("Company", vec![prop("name", PropType::String)]),
            vtype("Post", vec![prop("tag", PropType::String), prop("length", PropType::Int)]),
            vtype("Tag", vec![prop("name", PropType::String)]),
            vtype("TagClass", vec![prop("name", PropType::String)]),
        ],
        edges: vec![
            etype("knows", "Person", "Person"),
            etype("workAt", "Person", "Company"),
            etype("hasCreator", "Post", "Person"),
            etype("hasTag", "Post", "Tag"),
            etype("hasType", "Tag", "TagClass"),
        ],
    }
}

fn person(b: &mut GraphBuilder, id: i64, rng: &mut ChaCha8Rng) -> Vid {
    b.add_vertex(
        "Person",
        id,
        vec![PropValue::Str(format!("p{id}")), PropValue::Int(rng.gen_range(18..80))],
    )
    .expect("fresh person id")
}

fn knows(b: &mut GraphBuilder, s: Vid, d: Vid) {
    b.add_edge("knows", s, d, vec![]).expect("valid knows edge");
}

const TAG_CLASSES: [&str; 6] = ["Country", "City", "MusicalArtist", "Person", "SouthAmericanCountry", "Band"];

pub fn generate(spec: &GenSpec, seed: u64) -> PropertyGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        GenSpec::Path { n } | GenSpec::Cycle { n } | GenSpec::Star { n } => {
            let mut b = GraphBuilder::new(person_schema());
            let vs: Vec<Vid> = (0..*n as i64).map(|i| person(&mut b, i, &mut rng)).collect();
            match spec {
                GenSpec::Path { .. } => vs.windows(2).for_each(|w| knows(&mut b, w[0], w[1])),
                GenSpec::Cycle { .. } => {
                    vs.windows(2).for_each(|w| knows(&mut b, w[0], w[1]));
                    if vs.len() > 1 {
                        knows(&mut b, vs[vs.len() - 1], vs[0]);
                    }
                }
                _ => vs.iter().skip(1).for_each(|v| knows(&mut b, vs[0], *v)),
            }
            b.finish()
        }
        GenSpec::PowerLaw { n, m } => {
            let mut b = GraphBuilder::new(person_schema());
            let vs: Vec<Vid> = (0..*n as i64).map(|i| person(&mut b, i, &mut rng)).collect();
            // Degree-weighted endpoint pool for preferential attachment.
            let mut pool: Vec<Vid> = Vec::new();
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    for _ in 0..(*m).min(i) {
                        let target = if pool.is_empty() || rng.gen_bool(0.2) {
                            vs[rng.gen_range(0..i)]
                        } else {
                            pool[rng.gen_range(0..pool.len())]
                        };
                        knows(&mut b, *v, target);
                        pool.push(target);
                    }
                }
                pool.push(*v);
            }
            b.finish()
        }
        GenSpec::HeavyTweeter { candidates, items, match_pos } => {
            let mut b = GraphBuilder::new(social_schema());
            let start = person(&mut b, 0, &mut rng);
            let mut post_id = 0i64;
            for c in 1..=*candidates as i64 {
                let p = person(&mut b, c, &mut rng);
                knows(&mut b, start, p);
                for pos in 1..=*items {
                    let tag = if pos == *match_pos { "#ABC" } else { "#other" };
                    let post = b
                        .add_vertex("Post", post_id, vec![PropValue::Str(tag.to_string()), PropValue::Int(pos as i64)])
                        .expect("fresh post id");
                    post_id += 1;
                    b.add_edge("hasCreator", post, p, vec![]).expect("valid edge");
                }
            }
            b.finish()
        }
        GenSpec::Social { persons, avg_knows, companies, posts_per_person, tags } => {
            let mut b = GraphBuilder::new(social_schema());
            let ps: Vec<Vid> = (0..*persons as i64).map(|i| person(&mut b, i, &mut rng)).collect();
            let cs: Vec<Vid> = (0..(*companies).max(1) as i64)
                .map(|i| b.add_vertex("Company", i, vec![PropValue::Str(format!("c{i}"))]).expect("fresh company"))
                .collect();
            let classes: Vec<Vid> = TAG_CLASSES
                .iter()
                .enumerate()
                .map(|(i, n)| b.add_vertex("TagClass", i as i64, vec![PropValue::Str(n.to_string())]).expect("fresh class"))
                .collect();
            let ts: Vec<Vid> = (0..(*tags).max(1) as i64)
                .map(|i| {
                    let t = b.add_vertex("Tag", i, vec![PropValue::Str(format!("#t{i}"))]).expect("fresh tag");
                    let c = classes[rng.gen_range(0..classes.len())];
                    b.add_edge("hasType", t, c, vec![]).expect("valid edge");
                    t
                })
                .collect();
            for &p in &ps {
                let k = rng.gen_range(0..=2 * *avg_knows);
                for _ in 0..k {
                    let q = ps[rng.gen_range(0..ps.len())];
                    if q != p {
                        knows(&mut b, p, q);
                    }
                }
                if rng.gen_bool(0.85) {
                    let c = *cs.choose(&mut rng).expect("companies");
                    b.add_edge("workAt", p, c, vec![]).expect("valid edge");
                }
            }
            let mut post_id = 0i64;
            for &p in &ps {
                let n = rng.gen_range(0..=2 * *posts_per_person);
                for _ in 0..n {
                    let post = b
                        .add_vertex("Post", post_id, vec![PropValue::Str("#x".into()), PropValue::Int(rng.gen_range(1..500))])
                        .expect("fresh post");
                    post_id += 1;
                    b.add_edge("hasCreator", post, p, vec![]).expect("valid edge");
                    for _ in 0..rng.gen_range(0..3) {
                        let t = ts[rng.gen_range(0..ts.len())];
                        b.add_edge("hasTag", post, t, vec![]).expect("valid edge");
                    }
                }
            }
            b.finish()
        }
    }
}
