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

use std::fmt;

use crate::dataflow::{ScopeId, ScopeTag};
use crate::graph::ExecId;

use super::address::OpAddr;
use super::message::QueryId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// An item entered the operator's mailbox.
    Enq { data: bool },
    Process { data: bool },
    Create,
    Complete,
    Terminate,
    /// A DATA message was ignored (terminated instance or cancelled traversal).
    Drop,
    /// Queued items thrown away with their operator.
    Discard { items: u32 },
    SiEnter { scope: ScopeId, tag: ScopeTag },
    SiDone { scope: ScopeId, tag: ScopeTag },
    EosSkip { weight: u32 },
    SiReport,
    QueryDone,
    Fault(String),
}

/// One line of the processing trace. `addr` is absent for query-level
/// events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: u64,
    pub exec: ExecId,
    pub query: QueryId,
    pub addr: Option<OpAddr>,
    pub kind: EventKind,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Enq { data } => write!(f, "ENQ {}", if *data { "DATA" } else { "CTRL" }),
            EventKind::Process { data } => write!(f, "PROCESS {}", if *data { "DATA" } else { "CTRL" }),
            EventKind::Create => f.write_str("CREATE"),
            EventKind::Complete => f.write_str("COMPLETE"),
            EventKind::Terminate => f.write_str("TERMINATE"),
            EventKind::Drop => f.write_str("DROP"),
            EventKind::Discard { items } => write!(f, "DISCARD {items}"),
            EventKind::SiEnter { scope, tag } => write!(f, "SI_ENTER s{scope} {tag}"),
            EventKind::SiDone { scope, tag } => write!(f, "SI_DONE s{scope} {tag}"),
            EventKind::EosSkip { weight } => write!(f, "EOS_SKIP {weight}"),
            EventKind::SiReport => f.write_str("SI_REPORT"),
            EventKind::QueryDone => f.write_str("QUERY_DONE"),
            EventKind::Fault(m) => write!(f, "FAULT {m}"),
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} q{}", self.tick, self.exec, self.query)?;
        match &self.addr {
            Some(a) => write!(f, ":{a}")?,
            None => f.write_str(":-")?,
        }
        write!(f, " {}", self.kind)
    }
}
