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

//! `|`-separated CSV ingestion and export, one file per vertex type and per
//! edge type, described by a TOML schema file.

use std::fs;
use std::path::{Path, PathBuf};

use super::schema::GraphSchema;
use super::store::{GraphBuilder, PropertyGraph};
use super::value::PropValue;
use super::GraphError;

/// Counts reported after a successful load.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub vertices: Vec<(String, usize)>,
    pub edges: Vec<(String, usize)>,
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, GraphError> {
    csv::ReaderBuilder::new()
        .delimiter(b'|')
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| GraphError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn location(path: &Path, record: &csv::StringRecord) -> String {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    format!("{}:{}", path.display(), line)
}

/// Loads the graph described by the schema file at `schema_path`; data file
/// names in the schema are resolved relative to the schema's directory.
pub fn load_csv(schema_path: &Path) -> Result<(PropertyGraph, LoadSummary), GraphError> {
    let text = fs::read_to_string(schema_path)
        .map_err(|e| GraphError::Io { path: schema_path.display().to_string(), message: e.to_string() })?;
    let schema = GraphSchema::from_toml(&text).map_err(|e| GraphError::Schema(e.to_string()))?;
    let dir = schema_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    load_with_schema(schema, &dir)
}

pub fn load_with_schema(schema: GraphSchema, dir: &Path) -> Result<(PropertyGraph, LoadSummary), GraphError> {
    let mut b = GraphBuilder::new(schema.clone());
    for vt in &schema.vertices {
        let Some(file) = &vt.file else { continue };
        let path = dir.join(file);
        let mut rdr = reader(&path)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| GraphError::Parse { location: path.display().to_string(), message: e.to_string() })?;
            let loc = location(&path, &rec);
            if rec.len() != vt.properties.len() + 1 {
                return Err(GraphError::Parse {
                    location: loc,
                    message: format!("expected {} columns, found {}", vt.properties.len() + 1, rec.len()),
                });
            }
            let id: i64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| GraphError::Parse { location: loc.clone(), message: format!("invalid id {:?}", &rec[0]) })?;
            let mut props = Vec::with_capacity(vt.properties.len());
            for (p, cell) in vt.properties.iter().zip(rec.iter().skip(1)) {
                props.push(PropValue::parse(p.ty, cell).map_err(|m| GraphError::Parse { location: loc.clone(), message: m })?);
            }
            b.add_vertex(&vt.name, id, props).map_err(|e| match e {
                GraphError::DuplicateVertex { vtype, id } => GraphError::Parse {
                    location: loc.clone(),
                    message: format!("duplicate vertex id {vtype}:{id}"),
                },
                other => other,
            })?;
        }
    }
    for et in &schema.edges {
        let Some(file) = &et.file else { continue };
        let path = dir.join(file);
        let mut rdr = reader(&path)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| GraphError::Parse { location: path.display().to_string(), message: e.to_string() })?;
            let loc = location(&path, &rec);
            if rec.len() != et.properties.len() + 2 {
                return Err(GraphError::Parse {
                    location: loc,
                    message: format!("expected {} columns, found {}", et.properties.len() + 2, rec.len()),
                });
            }
            let parse_id = |s: &str| -> Result<i64, GraphError> {
                s.trim()
                    .parse()
                    .map_err(|_| GraphError::Parse { location: loc.clone(), message: format!("invalid id {s:?}") })
            };
            let s = parse_id(&rec[0])?;
            let d = parse_id(&rec[1])?;
            let src = b.vertex(&et.src, s).ok_or_else(|| GraphError::DanglingEndpoint {
                location: loc.clone(),
                vtype: et.src.clone(),
                id: s,
            })?;
            let dst = b.vertex(&et.dst, d).ok_or_else(|| GraphError::DanglingEndpoint {
                location: loc.clone(),
                vtype: et.dst.clone(),
                id: d,
            })?;
            let mut props = Vec::with_capacity(et.properties.len());
            for (p, cell) in et.properties.iter().zip(rec.iter().skip(2)) {
                props.push(PropValue::parse(p.ty, cell).map_err(|m| GraphError::Parse { location: loc.clone(), message: m })?);
            }
            b.add_edge(&et.label, src, dst, props)?;
        }
    }
    let g = b.finish();
    let summary = LoadSummary { vertices: g.counts_per_type(), edges: g.counts_per_label() };
    Ok((g, summary))
}

/// Writes `graph` as a schema file plus one CSV per type into `dir`.
/// Returns the schema path.
pub fn write_csv(graph: &PropertyGraph, dir: &Path) -> Result<PathBuf, GraphError> {
    let io = |p: &Path, e: std::io::Error| GraphError::Io { path: p.display().to_string(), message: e.to_string() };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut schema = graph.schema().clone();
    for vt in &mut schema.vertices {
        vt.file = Some(format!("{}.csv", vt.name.to_lowercase()));
    }
    for (i, et) in schema.edges.iter_mut().enumerate() {
        et.file = Some(format!("{}_{}_{}_{i}.csv", et.src.to_lowercase(), et.label, et.dst.to_lowercase()));
    }
    for (t, vt) in schema.vertices.iter().enumerate() {
        let path = dir.join(vt.file.as_ref().expect("file set"));
        let mut w = csv::WriterBuilder::new().delimiter(b'|').from_path(&path).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut header = vec!["id".to_string()];
        header.extend(vt.properties.iter().map(|p| p.name.clone()));
        w.write_record(&header).map_err(|e| io(&path, e.into()))?;
        for v in graph.vertices_of(t as u16) {
            let mut row = vec![graph.vertex_ref(v).id.to_string()];
            row.extend(graph.props(v).iter().map(|p| p.to_string()));
            w.write_record(&row).map_err(|e| io(&path, e.into()))?;
        }
        w.flush().map_err(|e| io(&path, e))?;
    }
    for et in &schema.edges {
        let path = dir.join(et.file.as_ref().expect("file set"));
        let mut w = csv::WriterBuilder::new().delimiter(b'|').from_path(&path).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut header = vec![format!("{}.id", et.src), format!("{}.id", et.dst)];
        header.extend(et.properties.iter().map(|p| p.name.clone()));
        w.write_record(&header).map_err(|e| io(&path, e.into()))?;
        let label = graph.label_id(&et.label);
        for e in graph.edges() {
            if Some(e.label) != label
                || graph.vertex_type_name(e.src) != et.src
                || graph.vertex_type_name(e.dst) != et.dst
            {
                continue;
            }
            let mut row = vec![graph.vertex_ref(e.src).id.to_string(), graph.vertex_ref(e.dst).id.to_string()];
            row.extend(e.props.iter().map(|p| p.to_string()));
            w.write_record(&row).map_err(|e| io(&path, e.into()))?;
        }
        w.flush().map_err(|e| io(&path, e))?;
    }
    let schema_path = dir.join("schema.toml");
    fs::write(&schema_path, schema.to_toml()).map_err(|e| io(&schema_path, e))?;
    Ok(schema_path)
}
