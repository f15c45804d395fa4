use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Independently switchable misbehaviours. All off means the service
/// conforms to the fixture API.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultFlags {
    /// Deleted customers stay retrievable.
    #[serde(rename = "F1", default)]
    pub get_after_delete: bool,
    /// The card list reports ids other than the ones assigned.
    #[serde(rename = "F2", default)]
    pub inconsistent_ids: bool,
    /// Customer creation answers 200 instead of 201.
    #[serde(rename = "F3", default)]
    pub wrong_create_code: bool,
    /// Customer reads omit the required `email` field.
    #[serde(rename = "F4", default)]
    pub schema_violation: bool,
    /// Deleting a feature that another feature requires succeeds.
    #[serde(rename = "F5", default)]
    pub constraint_delete_allowed: bool,
}

pub const FAULT_NAMES: [&str; 5] = ["F1", "F2", "F3", "F4", "F5"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown fault `{0}` (expected one of F1..F5)")]
pub struct UnknownFault(pub String);

impl FaultFlags {
    pub fn none() -> Self {
        FaultFlags::default()
    }

    /// Parses a comma-separated list such as `F1,F5`.
    pub fn parse_list(list: &str) -> Result<FaultFlags, UnknownFault> {
        let mut flags = FaultFlags::default();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            flags.set(name, true)?;
        }
        Ok(flags)
    }

    pub fn only(name: &str) -> Result<FaultFlags, UnknownFault> {
        FaultFlags::parse_list(name)
    }

    pub fn set(&mut self, name: &str, on: bool) -> Result<(), UnknownFault> {
        let slot = match name.to_ascii_uppercase().as_str() {
            "F1" => &mut self.get_after_delete,
            "F2" => &mut self.inconsistent_ids,
            "F3" => &mut self.wrong_create_code,
            "F4" => &mut self.schema_violation,
            "F5" => &mut self.constraint_delete_allowed,
            _ => return Err(UnknownFault(name.to_string())),
        };
        *slot = on;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: Option<Value>,
}

impl Reply {
    fn new(status: u16) -> Reply {
        Reply { status, body: None }
    }

    fn json(status: u16, body: Value) -> Reply {
        Reply {
            status,
            body: Some(body),
        }
    }

    fn error(status: u16, message: &str) -> Reply {
        Reply::json(status, json!({ "error": message }))
    }
}

#[derive(Debug, Clone, Default)]
struct Customer {
    data: Map<String, Value>,
    deleted: bool,
    cards: Vec<String>,
    addresses: Vec<String>,
}

const CUSTOMER_FIELDS: [&str; 4] = ["firstName", "lastName", "username", "email"];

/// Service state and request handling, independent of the HTTP server.
#[derive(Debug, Default)]
pub struct MockApp {
    pub api_key: String,
    pub faults: FaultFlags,
    customers: BTreeMap<String, Customer>,
    cards: BTreeMap<String, Value>,
    addresses: BTreeMap<String, Value>,
    features: BTreeSet<String>,
    /// (feature, required feature)
    constraints: BTreeSet<(String, String)>,
    ids: BTreeSet<String>,
}

/// FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl MockApp {
    pub fn new(api_key: &str, faults: FaultFlags) -> MockApp {
        MockApp {
            api_key: api_key.to_string(),
            faults,
            ..MockApp::default()
        }
    }

    /// Drops all data; keeps the key and the fault flags.
    pub fn reset(&mut self) {
        *self = MockApp::new(&self.api_key, self.faults);
    }

    /// Ids derive from the request content, so replaying the same requests
    /// against a freshly reset service yields the same ids.
    fn fresh_id(&mut self, prefix: &str, content: &str) -> String {
        let base = format!("{prefix}-{:012x}", fnv1a(content.as_bytes()) & 0xffff_ffff_ffff);
        let mut id = base.clone();
        let mut n = 2;
        while self.ids.contains(&id) {
            id = format!("{base}-{n}");
            n += 1;
        }
        self.ids.insert(id.clone());
        id
    }

    pub fn handle(
        &mut self,
        method: &str,
        path: &str,
        query: &BTreeMap<String, String>,
        api_key: Option<&str>,
        body: &[u8],
    ) -> Reply {
        if api_key != Some(self.api_key.as_str()) {
            return Reply::error(401, "missing or wrong X-API-Key");
        }
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        let body = if body.is_empty() {
            None
        } else {
            match serde_json::from_slice::<Value>(body) {
                Ok(v) => Some(v),
                Err(_) => return Reply::error(400, "body is not JSON"),
            }
        };
        match (method, segments.as_slice()) {
            ("POST", ["customer"]) => self.add_customer(body),
            ("GET", ["customer", id]) => self.get_customer(id),
            ("DELETE", ["customer", id]) => self.delete_customer(id),
            ("GET", ["customer", id, "cards"]) => self.list_cards(id),
            ("POST", ["card"]) => self.add_owned(query.get("custId"), body, true),
            ("POST", ["address"]) => self.add_owned(query.get("custId"), body, false),
            ("POST", ["features"]) => self.add_feature(body),
            ("DELETE", ["features", name]) => self.delete_feature(name),
            ("POST", ["constraints"]) => self.add_constraint(query.get("feature"), query.get("requires")),
            _ => Reply::error(404, "no such endpoint"),
        }
    }

    fn live(&self, id: &str) -> bool {
        self.customers.get(id).is_some_and(|c| !c.deleted)
    }

    fn add_customer(&mut self, body: Option<Value>) -> Reply {
        let Some(Value::Object(mut data)) = body else {
            return Reply::error(400, "expected a customer object");
        };
        if CUSTOMER_FIELDS
            .iter()
            .any(|f| !data.get(*f).is_some_and(Value::is_string))
        {
            return Reply::error(400, "firstName, lastName, username and email are required strings");
        }
        data.remove("id");
        let id = self.fresh_id("c", &Value::Object(data.clone()).to_string());
        self.customers.insert(
            id.clone(),
            Customer {
                data,
                ..Customer::default()
            },
        );
        let status = if self.faults.wrong_create_code { 200 } else { 201 };
        Reply::json(status, json!({ "id": id }))
    }

    fn get_customer(&self, id: &str) -> Reply {
        match self.customers.get(id) {
            Some(c) if !c.deleted || self.faults.get_after_delete => {
                let mut data = c.data.clone();
                data.insert("id".into(), json!(id));
                if self.faults.schema_violation {
                    data.remove("email");
                }
                Reply::json(200, Value::Object(data))
            }
            _ => Reply::error(404, "no such customer"),
        }
    }

    fn delete_customer(&mut self, id: &str) -> Reply {
        if !self.live(id) {
            return Reply::error(404, "no such customer");
        }
        if self.faults.get_after_delete {
            self.customers.get_mut(id).expect("live").deleted = true;
        } else {
            let c = self.customers.remove(id).expect("live");
            c.cards.iter().for_each(|k| drop(self.cards.remove(k)));
            c.addresses.iter().for_each(|k| drop(self.addresses.remove(k)));
        }
        Reply::new(204)
    }

    fn list_cards(&self, id: &str) -> Reply {
        if !self.live(id) {
            return Reply::error(404, "no such customer");
        }
        let cards = &self.customers[id].cards;
        let ids: Vec<Value> = cards
            .iter()
            .map(|k| {
                if self.faults.inconsistent_ids {
                    json!(format!("{k}-x"))
                } else {
                    json!(k)
                }
            })
            .collect();
        Reply::json(200, Value::Array(ids))
    }

    fn add_owned(&mut self, owner: Option<&String>, body: Option<Value>, card: bool) -> Reply {
        let Some(owner) = owner.filter(|o| self.live(o)) else {
            return Reply::error(404, "no such customer");
        };
        let Some(body @ Value::Object(_)) = body else {
            return Reply::error(400, "expected an object");
        };
        let owner = owner.clone();
        let prefix = if card { "card" } else { "addr" };
        let id = self.fresh_id(prefix, &format!("{owner}/{body}"));
        let c = self.customers.get_mut(&owner).expect("live");
        if card {
            c.cards.push(id.clone());
            self.cards.insert(id.clone(), body);
        } else {
            c.addresses.push(id.clone());
            self.addresses.insert(id.clone(), body);
        }
        Reply::json(201, json!({ "id": id }))
    }

    fn add_feature(&mut self, body: Option<Value>) -> Reply {
        let Some(Value::String(name)) = body else {
            return Reply::error(400, "expected a feature name");
        };
        if name.is_empty() || name.contains('/') {
            return Reply::error(400, "invalid feature name");
        }
        if !self.features.insert(name) {
            return Reply::error(409, "feature exists");
        }
        Reply::new(201)
    }

    fn delete_feature(&mut self, name: &str) -> Reply {
        if !self.features.contains(name) {
            return Reply::error(404, "no such feature");
        }
        let required = self.constraints.iter().any(|(_, req)| req == name);
        if required && !self.faults.constraint_delete_allowed {
            return Reply::error(400, "another feature requires this one");
        }
        self.features.remove(name);
        self.constraints.retain(|(f, r)| f != name && r != name);
        Reply::new(204)
    }

    fn add_constraint(&mut self, feature: Option<&String>, requires: Option<&String>) -> Reply {
        match (feature, requires) {
            (Some(f), Some(r)) if self.features.contains(f) && self.features.contains(r) => {
                self.constraints.insert((f.clone(), r.clone()));
                Reply::new(201)
            }
            _ => Reply::error(404, "no such feature"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEY: &str = "k";

    fn call(app: &mut MockApp, method: &str, path: &str, body: Value) -> Reply {
        let (path, query) = match path.split_once('?') {
            Some((p, q)) => (p, q),
            None => (path, ""),
        };
        let query = query
            .split('&')
            .filter_map(|kv| kv.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let bytes = if body.is_null() {
            Vec::new()
        } else {
            body.to_string().into_bytes()
        };
        app.handle(method, path, &query, Some(KEY), &bytes)
    }

    fn customer() -> Value {
        json!({"firstName": "Ada", "lastName": "L", "username": "ada", "email": "a@x"})
    }

    fn created_id(r: &Reply) -> String {
        r.body.as_ref().unwrap()["id"].as_str().unwrap().to_string()
    }

    #[test]
    fn conformant_customer_lifecycle() {
        let mut app = MockApp::new(KEY, FaultFlags::none());
        let r = call(&mut app, "POST", "/customer", customer());
        assert_eq!(r.status, 201);
        let id = created_id(&r);
        let got = call(&mut app, "GET", &format!("/customer/{id}"), Value::Null);
        assert_eq!(got.status, 200);
        let mut expected = customer();
        expected["id"] = json!(id);
        assert_eq!(got.body.unwrap(), expected);
        let card = call(&mut app, "POST", &format!("/card?custId={id}"), json!({"longNum": "1"}));
        assert_eq!(card.status, 201);
        let list = call(&mut app, "GET", &format!("/customer/{id}/cards"), Value::Null);
        assert_eq!(list.body.unwrap(), json!([created_id(&card)]));
        assert_eq!(
            call(&mut app, "DELETE", &format!("/customer/{id}"), Value::Null).status,
            204
        );
        assert_eq!(
            call(&mut app, "GET", &format!("/customer/{id}"), Value::Null).status,
            404
        );
        assert_eq!(
            call(&mut app, "POST", &format!("/card?custId={id}"), json!({})).status,
            404
        );
    }

    #[test]
    fn unauthorized_without_key() {
        let mut app = MockApp::new(KEY, FaultFlags::none());
        let r = app.handle("GET", "/customer/x", &BTreeMap::new(), None, b"");
        assert_eq!(r.status, 401);
    }

    #[test]
    fn ids_depend_on_content_and_are_unique() {
        let mut a = MockApp::new(KEY, FaultFlags::none());
        let mut b = MockApp::new(KEY, FaultFlags::none());
        let ia = created_id(&call(&mut a, "POST", "/customer", customer()));
        let ib = created_id(&call(&mut b, "POST", "/customer", customer()));
        assert_eq!(ia, ib);
        let again = created_id(&call(&mut a, "POST", "/customer", customer()));
        assert_ne!(ia, again);
        a.reset();
        assert_eq!(created_id(&call(&mut a, "POST", "/customer", customer())), ia);
    }

    #[test]
    fn each_fault_changes_its_behaviour() {
        let mut app = MockApp::new(KEY, FaultFlags::only("F1").unwrap());
        let id = created_id(&call(&mut app, "POST", "/customer", customer()));
        assert_eq!(
            call(&mut app, "DELETE", &format!("/customer/{id}"), Value::Null).status,
            204
        );
        assert_eq!(
            call(&mut app, "GET", &format!("/customer/{id}"), Value::Null).status,
            200
        );
        assert_eq!(
            call(&mut app, "DELETE", &format!("/customer/{id}"), Value::Null).status,
            404
        );

        let mut app = MockApp::new(KEY, FaultFlags::only("F2").unwrap());
        let id = created_id(&call(&mut app, "POST", "/customer", customer()));
        let card = created_id(&call(&mut app, "POST", &format!("/card?custId={id}"), json!({"n": 1})));
        let list = call(&mut app, "GET", &format!("/customer/{id}/cards"), Value::Null);
        assert_ne!(list.body.unwrap(), json!([card]));

        let mut app = MockApp::new(KEY, FaultFlags::only("F3").unwrap());
        assert_eq!(call(&mut app, "POST", "/customer", customer()).status, 200);

        let mut app = MockApp::new(KEY, FaultFlags::only("F4").unwrap());
        let id = created_id(&call(&mut app, "POST", "/customer", customer()));
        let got = call(&mut app, "GET", &format!("/customer/{id}"), Value::Null);
        assert!(got.body.unwrap().get("email").is_none());
    }

    #[test]
    fn feature_constraints() {
        for (flags, expected) in [(FaultFlags::none(), 400), (FaultFlags::only("F5").unwrap(), 204)] {
            let mut app = MockApp::new(KEY, flags);
            assert_eq!(call(&mut app, "POST", "/features", json!("feat1")).status, 201);
            assert_eq!(call(&mut app, "POST", "/features", json!("feat2")).status, 201);
            assert_eq!(call(&mut app, "POST", "/features", json!("feat2")).status, 409);
            let r = call(
                &mut app,
                "POST",
                "/constraints?feature=feat2&requires=feat1",
                Value::Null,
            );
            assert_eq!(r.status, 201);
            assert_eq!(
                call(&mut app, "DELETE", "/features/feat1", Value::Null).status,
                expected
            );
            assert_eq!(call(&mut app, "DELETE", "/features/feat2", Value::Null).status, 204);
        }
    }

    #[test]
    fn fault_list_parsing() {
        let f = FaultFlags::parse_list("F1, f5").unwrap();
        assert!(f.get_after_delete && f.constraint_delete_allowed && !f.inconsistent_ids);
        assert_eq!(FaultFlags::parse_list("F9"), Err(UnknownFault("F9".into())));
        assert_eq!(FaultFlags::parse_list("").unwrap(), FaultFlags::none());
        let v = serde_json::to_value(f).unwrap();
        assert_eq!(
            v,
            json!({"F1": true, "F2": false, "F3": false, "F4": false, "F5": true})
        );
    }
}
