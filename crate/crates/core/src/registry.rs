//! Name-keyed factories for runtime-selectable strategies.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

type Factory<T, A> = Arc<dyn Fn(&A) -> Result<Arc<T>> + Send + Sync>;

/// Maps strategy names to constructors taking arguments of type `A`.
pub struct Registry<T: ?Sized, A: ?Sized = ()> {
    kind: &'static str,
    entries: BTreeMap<String, Factory<T, A>>,
}

impl<T: ?Sized, A: ?Sized> Clone for Registry<T, A> {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            entries: self.entries.clone(),
        }
    }
}

impl<T: ?Sized, A: ?Sized> Registry<T, A> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    /// Registers a fallible constructor; replaces any previous entry.
    pub fn register_with<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&A) -> Result<Arc<T>> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Arc::new(factory));
    }

    pub fn build(&self, name: &str, args: &A) -> Result<Arc<T>> {
        match self.entries.get(name) {
            Some(f) => f(args),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl<T: ?Sized> Registry<T, ()> {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Arc<T> + Send + Sync + 'static,
    {
        self.register_with(name, move |_| Ok(factory()));
    }

    pub fn create(&self, name: &str) -> Result<Arc<T>> {
        self.build(name, &())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape: Send + Sync {
        fn area(&self) -> f64;
    }

    struct Square(f64);

    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    #[test]
    fn builds_registered_entries_and_lists_names() {
        let mut r: Registry<dyn Shape, [f64]> = Registry::new("shape");
        r.register_with("square", |a| {
            let side = *a.first().ok_or(Error::InvalidParameter("side".into()))?;
            Ok(Arc::new(Square(side)))
        });
        assert_eq!(r.build("square", &[3.0]).unwrap().area(), 9.0);
        assert!(r.build("square", &[]).is_err());
        match r.build("circle", &[1.0]) {
            Err(Error::UnknownStrategy { available, .. }) => assert_eq!(available, "square"),
            _ => panic!("expected unknown strategy"),
        }
        assert_eq!(r.names(), vec!["square"]);
    }
}
