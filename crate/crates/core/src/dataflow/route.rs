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

use std::collections::HashSet;

use super::model::{ScopeDecl, ScopeKind};
use super::tag::ScopeTag;
use super::ModelError;

/// Hands out fresh branch-instance ordinals for one of `stride` parallel
/// ingress operators: operator `index` allocates `index+1`, `index+1+stride`, ...
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchAllocator {
    index: u32,
    stride: u32,
    count: u32,
}

impl BranchAllocator {
    pub fn new(index: u32, stride: u32) -> BranchAllocator {
        assert!(stride >= 1 && index < stride, "ingress index out of range");
        BranchAllocator { index, stride, count: 0 }
    }

    pub fn next_ordinal(&mut self) -> u32 {
        let o = self.index + 1 + self.count * self.stride;
        self.count += 1;
        o
    }

    /// Number of ordinals allocated so far.
    pub fn count(&self) -> u32 {
        self.count
    }

    /// The ordinals allocated by ingress `index` after `count` allocations.
    pub fn ordinals(index: u32, stride: u32, count: u32) -> impl Iterator<Item = u32> {
        (0..count).map(move |k| index + 1 + k * stride)
    }
}

/// Routing state of one ingress operator.
#[derive(Clone, Debug)]
pub struct IngressState {
    pub alloc: BranchAllocator,
    /// Destination instances already known to exist.
    seen: HashSet<ScopeTag>,
}

impl IngressState {
    pub fn new(index: u32, stride: u32) -> IngressState {
        IngressState { alloc: BranchAllocator::new(index, stride), seen: HashSet::new() }
    }

    /// Forgets a destination instance (after it completed or was terminated).
    pub fn forget(&mut self, tag: &ScopeTag) {
        self.seen.remove(tag);
    }
}

impl Default for IngressState {
    fn default() -> Self {
        IngressState::new(0, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Routed {
    pub tag: ScopeTag,
    /// The destination instance did not exist before this message.
    pub needs_instantiation: bool,
}

/// Computes the instance tag a message entering `scope` is routed to.
pub fn ingress_route(
    incoming: &ScopeTag,
    scope: &ScopeDecl,
    via_backward_edge: bool,
    state: &mut IngressState,
) -> Result<Routed, ModelError> {
    let depth = scope.depth as usize;
    let bad_depth = || ModelError::TagDepth { scope: scope.id, tag: incoming.to_string() };
    let tag = match (scope.kind, via_backward_edge) {
        (ScopeKind::Branch, true) => return Err(ModelError::BackwardEntryOnBranch(scope.id)),
        (_, false) => {
            if incoming.depth() + 1 != depth {
                return Err(bad_depth());
            }
            if incoming.depth() + 1 > super::MAX_SCOPE_DEPTH {
                return Err(ModelError::TooDeep(incoming.depth() + 1));
            }
            match scope.kind {
                ScopeKind::Branch => incoming.child(state.alloc.next_ordinal()),
                ScopeKind::Loop => incoming.child(1),
            }
        }
        (ScopeKind::Loop, true) => {
            if incoming.depth() != depth {
                return Err(bad_depth());
            }
            let k = incoming.last().ok_or_else(bad_depth)?;
            incoming.with_last(k + 1)
        }
    };
    let needs_instantiation = state.seen.insert(tag.clone());
    Ok(Routed { tag, needs_instantiation })
}
