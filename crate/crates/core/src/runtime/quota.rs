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

/// How a parent divides its budget among runnable children.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuotaPolicy {
    /// Equal shares; the remainder goes one unit each to the first children
    /// (creation order).
    EqualShare,
    /// Everything to the first child (children sorted by priority).
    PriorityTakesAll,
}

/// Splits `budget` among `children` runnable children.
pub fn assign_quota(budget: u64, children: usize, policy: QuotaPolicy) -> Vec<u64> {
    if children == 0 {
        return Vec::new();
    }
    match policy {
        QuotaPolicy::EqualShare => {
            let n = children as u64;
            let (base, rem) = (budget / n, budget % n);
            (0..n).map(|i| base + u64::from(i < rem)).collect()
        }
        QuotaPolicy::PriorityTakesAll => {
            let mut v = vec![0; children];
            v[0] = budget;
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_split() {
        assert_eq!(assign_quota(10, 2, QuotaPolicy::EqualShare), vec![5, 5]);
    }

    #[test]
    fn remainder_to_earliest() {
        assert_eq!(assign_quota(10, 3, QuotaPolicy::EqualShare), vec![4, 3, 3]);
    }

    #[test]
    fn priority_takes_all() {
        assert_eq!(assign_quota(10, 2, QuotaPolicy::PriorityTakesAll), vec![10, 0]);
        assert!(assign_quota(10, 0, QuotaPolicy::EqualShare).is_empty());
    }
}
