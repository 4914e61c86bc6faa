//! In-memory identity store: the engine's system of record between feed
//! pulls. Point-in-time consistency is guaranteed by Rust's borrow rules —
//! readers hold `&IdentityStore` and can never observe a half-applied
//! mutation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{Identity, PersonId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("identity {0} already exists")]
    Duplicate(PersonId),
    #[error("identity {0} not found")]
    NotFound(PersonId),
}

/// Map of person id to identity. A person id appears at most once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityStore {
    identities: BTreeMap<PersonId, Identity>,
}

impl IdentityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn contains(&self, id: &PersonId) -> bool {
        self.identities.contains_key(id)
    }

    pub fn get(&self, id: &PersonId) -> Option<&Identity> {
        self.identities.get(id)
    }

    /// Insert a brand-new identity; rejects person ids already present.
    pub fn insert(&mut self, identity: Identity) -> Result<(), StoreError> {
        if self.identities.contains_key(&identity.person_id) {
            return Err(StoreError::Duplicate(identity.person_id));
        }
        self.identities.insert(identity.person_id.clone(), identity);
        Ok(())
    }

    /// Replace an existing identity; rejects unknown person ids.
    pub fn update(&mut self, identity: Identity) -> Result<(), StoreError> {
        if !self.identities.contains_key(&identity.person_id) {
            return Err(StoreError::NotFound(identity.person_id));
        }
        self.identities.insert(identity.person_id.clone(), identity);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Identity> {
        self.identities.values()
    }
}

impl FromIterator<Identity> for IdentityStore {
    fn from_iter<T: IntoIterator<Item = Identity>>(iter: T) -> Self {
        let mut store = IdentityStore::new();
        for identity in iter {
            // Last write wins when building from raw snapshots.
            store.identities.insert(identity.person_id.clone(), identity);
        }
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::Role;

    #[test]
    fn insert_rejects_duplicate_person_id() {
        let mut store = IdentityStore::new();
        let id = Identity::new(PersonId::new("P1"), "A", Role::Faculty, None, "D");
        store.insert(id.clone()).unwrap();
        assert_eq!(store.insert(id), Err(StoreError::Duplicate(PersonId::new("P1"))));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn update_rejects_unknown_person_id() {
        let mut store = IdentityStore::new();
        let id = Identity::new(PersonId::new("P2"), "B", Role::Faculty, None, "D");
        assert_eq!(store.update(id), Err(StoreError::NotFound(PersonId::new("P2"))));
    }
}
