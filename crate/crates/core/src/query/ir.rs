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

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataflow::MAX_SCOPE_DEPTH;
use crate::graph::{Direction, VertexPredicate};

use super::QueryError;

/// A literal or a named parameter (`"$name"`) bound at run time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Lit(i64),
    Param(String),
}

impl Arg {
    fn param_name(&self) -> Option<&str> {
        match self {
            Arg::Param(p) => Some(p.strip_prefix('$').unwrap_or(p)),
            Arg::Lit(_) => None,
        }
    }

    /// The literal value; errors on an unbound parameter.
    pub fn value(&self) -> Result<i64, QueryError> {
        match self {
            Arg::Lit(v) => Ok(*v),
            Arg::Param(p) => Err(QueryError::MissingParam(p.trim_start_matches('$').to_string())),
        }
    }
}

fn default_vtype() -> String {
    "Person".to_string()
}

fn fifo() -> String {
    "fifo".to_string()
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    /// Start vertices, by external id of type `vtype`.
    Source {
        #[serde(default = "default_vtype")]
        vtype: String,
        ids: Vec<Arg>,
    },
    Adjacent {
        dir: Direction,
        #[serde(default)]
        label: String,
    },
    Filter {
        pred: VertexPredicate,
    },
    Dedup,
    Limit {
        n: Arg,
    },
    Count,
    /// Exactly one of `times` and `until` is set. `max_loops` bounds an
    /// `until` loop; traversers still looping past it are dropped.
    Repeat {
        body: Vec<Step>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        times: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        until: Option<VertexPredicate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_loops: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        emit: Option<VertexPredicate>,
        #[serde(default = "fifo")]
        inter: String,
        #[serde(default = "fifo")]
        intra: String,
    },
    /// Existential filter: keeps a traverser iff `sub` yields anything
    /// from its vertex.
    Where {
        sub: Vec<Step>,
        #[serde(default = "yes")]
        cancellable: bool,
        #[serde(default = "fifo")]
        inter: String,
        #[serde(default = "fifo")]
        intra: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_si: Option<u32>,
    },
    /// Concatenation of the branches' outputs; an empty branch is identity.
    Union {
        branches: Vec<Vec<Step>>,
    },
}

/// A named constant vertex set computed from the start vertices before the
/// query runs. Only `adjacent` and `filter` steps are allowed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetDecl {
    pub name: String,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryIR {
    #[serde(default)]
    pub name: String,
    /// Default parameter values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sets: Vec<SetDecl>,
    pub steps: Vec<Step>,
    /// Intra-instance policy of the query's root scope.
    #[serde(default = "fifo")]
    pub root_policy: String,
}

pub type Params = BTreeMap<String, i64>;

fn invalid(msg: impl Into<String>) -> QueryError {
    QueryError::Invalid(msg.into())
}

/// Where a step list sits; decides which steps are legal.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Top,
    Loop,
    Where,
    Set,
}

fn check_steps(steps: &[Step], ctx: Ctx, depth: usize) -> Result<(), QueryError> {
    if depth > MAX_SCOPE_DEPTH {
        return Err(QueryError::Compile(format!("scopes nested deeper than {MAX_SCOPE_DEPTH}")));
    }
    for (i, s) in steps.iter().enumerate() {
        let last = i + 1 == steps.len();
        match s {
            Step::Source { .. } => return Err(invalid("source is only allowed as the first step")),
            Step::Adjacent { .. } | Step::Filter { .. } => {}
            _ if ctx == Ctx::Set => return Err(invalid("set steps may only be adjacent or filter")),
            Step::Dedup => {
                if ctx == Ctx::Loop {
                    return Err(invalid("dedup inside a repeat body is not supported"));
                }
            }
            Step::Limit { n } => {
                if ctx != Ctx::Top || !last {
                    return Err(invalid("limit must be the last step of the query"));
                }
                if let Arg::Lit(v) = n {
                    if *v < 1 {
                        return Err(invalid("limit needs n >= 1"));
                    }
                }
            }
            Step::Count => {
                let ok = ctx == Ctx::Top && (last || (i + 2 == steps.len() && matches!(steps[i + 1], Step::Limit { .. })));
                if !ok {
                    return Err(invalid("count must end the query"));
                }
            }
            Step::Repeat { body, times, until, max_loops, .. } => {
                match (times, until) {
                    (Some(0), _) => return Err(invalid("repeat needs times >= 1")),
                    (Some(_), None) | (None, Some(_)) => {}
                    _ => return Err(invalid("repeat needs exactly one of times and until")),
                }
                if times.is_some() && max_loops.is_some() {
                    return Err(invalid("max_loops only applies to until"));
                }
                if max_loops == &Some(0) {
                    return Err(invalid("max_loops must be >= 1"));
                }
                if body.is_empty() {
                    return Err(invalid("repeat body is empty"));
                }
                check_steps(body, Ctx::Loop, depth + 1)?;
            }
            Step::Where { sub, max_si, .. } => {
                if sub.is_empty() {
                    return Err(invalid("where subquery is empty"));
                }
                if max_si == &Some(0) {
                    return Err(invalid("max_si must be >= 1"));
                }
                check_steps(sub, Ctx::Where, depth + 1)?;
            }
            Step::Union { branches } => {
                if branches.is_empty() {
                    return Err(invalid("union without branches"));
                }
                // A union adds no scope; its branches keep the context.
                for b in branches {
                    check_branch(b, ctx, depth)?;
                }
            }
        }
    }
    Ok(())
}

fn check_branch(steps: &[Step], ctx: Ctx, depth: usize) -> Result<(), QueryError> {
    if steps.iter().any(|s| matches!(s, Step::Limit { .. } | Step::Count)) {
        return Err(invalid("limit and count are not allowed inside a union"));
    }
    check_steps(steps, ctx, depth)
}

fn for_each_arg(steps: &mut [Step], f: &mut impl FnMut(&mut Arg) -> Result<(), QueryError>) -> Result<(), QueryError> {
    for s in steps {
        match s {
            Step::Source { ids, .. } => {
                for a in ids {
                    f(a)?;
                }
            }
            Step::Limit { n } => f(n)?,
            Step::Repeat { body, .. } => for_each_arg(body, f)?,
            Step::Where { sub, .. } => for_each_arg(sub, f)?,
            Step::Union { branches } => {
                for b in branches {
                    for_each_arg(b, f)?;
                }
            }
            _ => {}
        }
    }
    Ok(())
}

impl QueryIR {
    pub fn new(steps: Vec<Step>) -> QueryIR {
        QueryIR { name: String::new(), params: BTreeMap::new(), sets: Vec::new(), steps, root_policy: fifo() }
    }

    pub fn from_toml(text: &str) -> Result<QueryIR, QueryError> {
        let q: QueryIR = toml::from_str(text).map_err(|e| QueryError::File(e.to_string()))?;
        q.validate()?;
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<QueryIR, QueryError> {
        let text = std::fs::read_to_string(path).map_err(|e| QueryError::File(format!("{}: {e}", path.display())))?;
        QueryIR::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("query IR serializes")
    }

    /// Checks the structural rules of the IR.
    pub fn validate(&self) -> Result<(), QueryError> {
        match self.steps.first() {
            Some(Step::Source { .. }) => {}
            _ => return Err(invalid("a query starts with a source step")),
        }
        check_steps(&self.steps[1..], Ctx::Top, 0)?;
        for s in &self.sets {
            check_steps(&s.steps, Ctx::Set, 0)?;
        }
        Ok(())
    }

    /// Names of all parameters referenced by the query.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut copy = self.steps.clone();
        let _ = for_each_arg(&mut copy, &mut |a| {
            if let Some(n) = a.param_name() {
                if !names.iter().any(|x: &String| x == n) {
                    names.push(n.to_string());
                }
            }
            Ok(())
        });
        names
    }

    /// Substitutes parameters: `params` first, then the query's defaults.
    pub fn bind(&self, params: &Params) -> Result<QueryIR, QueryError> {
        let mut q = self.clone();
        let defaults = self.params.clone();
        for_each_arg(&mut q.steps, &mut |a| {
            if let Some(n) = a.param_name() {
                let v = params.get(n).or_else(|| defaults.get(n)).ok_or_else(|| QueryError::MissingParam(n.into()))?;
                *a = Arg::Lit(*v);
            }
            Ok(())
        })?;
        q.validate()?;
        Ok(q)
    }

    /// The bound limit of the query, if it ends with one.
    pub fn limit(&self) -> Option<u64> {
        match self.steps.last() {
            Some(Step::Limit { n: Arg::Lit(n) }) => Some(*n as u64),
            _ => None,
        }
    }

    /// Whether results are deduplicated (a top-level dedup step).
    pub fn dedups(&self) -> bool {
        self.steps.iter().any(|s| matches!(s, Step::Dedup))
    }
}
