#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use plgen_core::model::{Activity, ModelDraft};
use plgen_core::ProcessModel;
use plgen_stream::{StreamConfig, WireEvent};
use tokio::sync::broadcast;

/// `start → names[0] → … → end`, with ids `a0, a1, …`.
pub fn chain(name: &str, names: &[&str]) -> ProcessModel {
    let mut d = ModelDraft::new(name, name);
    d.start_event("s").end_event("e");
    let mut prev = "s".to_string();
    for (i, n) in names.iter().enumerate() {
        let id = format!("a{i}");
        d.activity(Activity::new(id.as_str(), *n));
        d.sequence(prev.as_str(), id.as_str());
        prev = id;
    }
    d.sequence(prev.as_str(), "e");
    d.into_model()
}

pub fn config(p: usize, m: f64) -> StreamConfig {
    StreamConfig {
        parallel_instances: p,
        time_multiplier: m,
        listen_address: "127.0.0.1:0".into(),
        ..Default::default()
    }
}

pub async fn collect(rx: &mut broadcast::Receiver<Arc<WireEvent>>, n: usize) -> Vec<WireEvent> {
    let mut out = Vec::with_capacity(n);
    tokio::time::timeout(Duration::from_secs(120), async {
        while out.len() < n {
            match rx.recv().await {
                Ok(e) => out.push((*e).clone()),
                Err(broadcast::error::RecvError::Lagged(k)) => panic!("receiver lagged by {k}"),
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    })
    .await
    .expect("events arrive in time");
    out
}
