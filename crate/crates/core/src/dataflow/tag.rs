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

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::ModelError;

/// Maximum scope nesting depth.
pub const MAX_SCOPE_DEPTH: usize = 16;

/// Names a chain of scope instances: element `k` is the ordinal of the
/// instance at depth `k + 1`. The empty tag belongs to everything outside all
/// scopes. Ordering is lexical.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScopeTag(SmallVec<[u32; 4]>);

impl ScopeTag {
    pub fn root() -> ScopeTag {
        ScopeTag(SmallVec::new())
    }

    /// Builds a tag, rejecting zero elements and excessive depth.
    pub fn new(elements: &[u32]) -> Result<ScopeTag, ModelError> {
        if elements.len() > MAX_SCOPE_DEPTH {
            return Err(ModelError::TooDeep(elements.len()));
        }
        if elements.contains(&0) {
            return Err(ModelError::ZeroOrdinal);
        }
        Ok(ScopeTag(SmallVec::from_slice(elements)))
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn elements(&self) -> &[u32] {
        &self.0
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    /// Tag of the enclosing instance at `depth` (a prefix).
    pub fn prefix(&self, depth: usize) -> ScopeTag {
        ScopeTag(SmallVec::from_slice(&self.0[..depth.min(self.0.len())]))
    }

    pub fn is_prefix_of(&self, other: &ScopeTag) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// Appends one ordinal (entering a nested scope instance).
    pub fn child(&self, ordinal: u32) -> ScopeTag {
        debug_assert!(ordinal >= 1);
        let mut v = self.0.clone();
        v.push(ordinal);
        ScopeTag(v)
    }

    /// Replaces the last ordinal (moving to another instance of the same scope).
    pub fn with_last(&self, ordinal: u32) -> ScopeTag {
        let mut v = self.0.clone();
        *v.last_mut().expect("non-empty tag") = ordinal;
        ScopeTag(v)
    }
}

/// Removes the last element of `tag` (what an egress vertex does).
pub fn egress_strip(tag: &ScopeTag) -> Result<ScopeTag, ModelError> {
    if tag.is_root() {
        return Err(ModelError::StripEmptyTag);
    }
    Ok(tag.prefix(tag.depth() - 1))
}

impl fmt::Debug for ScopeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ScopeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(">")
    }
}
