//! Wall-clock measurements. Tests take a shared lock so they never compete
//! with each other for the CPU.

mod common;

use std::collections::HashSet;
use std::sync::Mutex;

use common::{chain, collect, config};
use plgen_stream::{StreamSession, WireEvent};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn single_activity_gaps_match_the_scaled_gap() {
    let _serial = serial();
    // One activity one second after the trace start, then a one second gap
    // before the next trace: two simulated seconds per event.
    let m = 0.05;
    let session = StreamSession::start(chain("m", &["A"]), config(1, m)).await.unwrap();
    let mut rx = session.handle().subscribe();
    let events = collect(&mut rx, 501).await;
    session.handle().stop();
    let expected = 2.0 * 1000.0 * m;
    let gaps: Vec<i64> = events.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
    let worst = gaps.iter().map(|&g| (g as f64 - expected).abs()).fold(0.0, f64::max);
    assert!(worst <= 20.0, "worst deviation {worst} ms from {expected} ms");
    let mean = gaps.iter().sum::<i64>() as f64 / gaps.len() as f64;
    assert!((mean - expected).abs() < 2.0, "mean gap {mean}");
    session.join().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn swaps_do_not_stall_emission() {
    let _serial = serial();
    let m = 0.01;
    let model = chain("m", &["A"]);
    let session = StreamSession::start(model.clone(), config(1, m)).await.unwrap();
    let handle = session.handle();
    let mut rx = handle.subscribe();
    let mut events = Vec::new();
    for _ in 0..10 {
        events.extend(collect(&mut rx, 10).await);
        handle.swap_model(model.clone()).unwrap();
    }
    handle.stop();
    let expected = 2.0 * 1000.0 * m;
    for w in events.windows(2) {
        let gap = (w[1].timestamp - w[0].timestamp) as f64;
        assert!(gap <= 3.0 * expected, "gap of {gap} ms");
    }
    assert_eq!(events.iter().map(|e| &e.activity).collect::<HashSet<_>>().len(), 1);
    session.join().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn halving_the_multiplier_doubles_the_rate() {
    let _serial = serial();
    let m = 0.02;
    let session = StreamSession::start(chain("m", &["A"]), config(1, m)).await.unwrap();
    let handle = session.handle();
    let mut rx = handle.subscribe();
    collect(&mut rx, 5).await;
    let rate = |events: &[WireEvent]| {
        let span = events.last().unwrap().timestamp - events[0].timestamp;
        (events.len() - 1) as f64 * 1000.0 / span as f64
    };
    let before = rate(&collect(&mut rx, 60).await);
    handle.set_multiplier(m / 2.0).unwrap();
    collect(&mut rx, 5).await;
    let after = rate(&collect(&mut rx, 120).await);
    handle.stop();
    let ratio = after / before;
    assert!((1.8..=2.2).contains(&ratio), "rate {before:.1}/s then {after:.1}/s");
    assert_eq!(handle.status().time_multiplier, m / 2.0);
    session.join().await;
}
