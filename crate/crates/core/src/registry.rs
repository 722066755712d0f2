//! Name-keyed registries of strategy constructors.
//!
//! Attacks, decoders, channel classes and game payoffs are each a family of
//! interchangeable strategies behind a trait object. A [`Registry`] maps a
//! configuration name to a constructor so the CLI and experiment configs can
//! pick a variant at runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Ctor<T, C> = Box<dyn Fn(&C) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    entries: BTreeMap<String, Ctor<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: BTreeMap::new() }
    }

    /// Registers `ctor` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &str, ctor: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Box::new(ctor));
        self
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(ctor) => ctor(config),
            None => {
                Err(Error::UnknownStrategy { kind: self.kind, name: name.to_string(), known: self.names().join(", ") })
            }
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Hello(String);
    impl Greeter for Hello {
        fn greet(&self) -> String {
            format!("hello {}", self.0)
        }
    }

    #[test]
    fn build_by_name() {
        let mut reg: Registry<dyn Greeter, String> = Registry::new("greeter");
        reg.register("hello", |who: &String| Ok(Box::new(Hello(who.clone())) as Box<dyn Greeter>));
        assert_eq!(reg.build("hello", &"bob".into()).unwrap().greet(), "hello bob");
        let err = reg.build("bye", &"bob".into()).err().unwrap();
        assert!(err.to_string().contains("known: hello"));
        assert_eq!(reg.names(), vec!["hello"]);
    }
}
