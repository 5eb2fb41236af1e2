use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use http_body_util::BodyExt;
use patchmatch::fixtures::scene;
use patchmatch::image::{decode_image, encode_png};
use patchmatch::synthesis::{Annotations, HardRegion, LineKind, ModelConstraint};
use patchmatch::{ColorSpace, ImageBuffer, Pos, Rect};
use patchmatch_service::annotations::{from_annotations, to_annotations, Record};
use patchmatch_service::{preview_dims, router, Config};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(Config {
        workers: 2,
        ..Config::default()
    })
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post_json(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = send(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn upload(app: &Router, bytes: Vec<u8>) -> (StatusCode, Value) {
    let (s, b) = send(app, Request::post("/sessions").body(Body::from(bytes)).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn session(app: &Router, img: &ImageBuffer) -> String {
    let (s, v) = upload(app, encode_png(img).unwrap()).await;
    assert_eq!(s, StatusCode::CREATED);
    v["id"].as_str().unwrap().to_string()
}

fn mask_png(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> String {
    let m = ImageBuffer::from_fn(w, h, 1, ColorSpace::Srgb, |x, y, _| if on(x, y) { 1.0 } else { 0.0 });
    STANDARD.encode(encode_png(&m).unwrap())
}

fn fast() -> Value {
    json!({ "seed": 3, "coarseIters": 4, "fineIters": 2 })
}

async fn wait(app: &Router, sid: &str, job: &str) -> Value {
    let start = Instant::now();
    loop {
        let (s, b) = get(app, &format!("/sessions/{sid}/jobs/{job}")).await;
        assert_eq!(s, StatusCode::OK);
        let v: Value = serde_json::from_slice(&b).unwrap();
        if v["state"] == "done" || v["state"] == "failed" {
            return v;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "job did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

async fn run_edit(app: &Router, sid: &str, req: &Value) -> Vec<u8> {
    let (s, v) = post_json(app, &format!("/sessions/{sid}/edits"), req).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let done = wait(app, sid, v["jobId"].as_str().unwrap()).await;
    assert_eq!(done["state"], "done", "{done}");
    assert_eq!(done["progress"], 1.0);
    let (s, png) = get(app, done["resultPngUrl"].as_str().unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    png
}

#[tokio::test]
async fn upload_creates_a_session() {
    let app = app();
    let (s, v) = upload(&app, encode_png(&scene(80, 60, 1)).unwrap()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(80), Some(60)));
    let (s, b) = get(&app, &format!("/sessions/{}/preview.png", v["id"].as_str().unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(decode_image(&b).unwrap().width(), 80);

    let (s, v) = upload(&app, b"definitely not a png".to_vec()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn large_uploads_are_downscaled_to_the_preview_size() {
    assert_eq!(preview_dims(2000, 1500, 512), (512, 384));
    assert_eq!(preview_dims(1500, 2000, 512), (384, 512));
    assert_eq!(preview_dims(300, 200, 512), (300, 200));
    let app = app();
    let (s, v) = upload(&app, encode_png(&scene(1000, 750, 4)).unwrap()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(512), Some(384)));
}

#[tokio::test]
async fn oversized_upload_is_rejected() {
    let app = router(Config {
        max_upload_bytes: 1000,
        ..Config::default()
    });
    let (s, _) = upload(&app, vec![0u8; 5000]).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    let (s, _) = upload(&app, vec![0u8; 21 * 1024 * 1024]).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    let (s, _) = upload(&router(Config::default()), vec![0u8; 21 * 1024 * 1024]).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn complete_runs_and_is_reproducible() {
    let app = app();
    let src = scene(64, 48, 2);
    let sid = session(&app, &src).await;
    let req = json!({
        "tool": "complete",
        "masks": { "hole": mask_png(64, 48, |x, y| (24..36).contains(&x) && (16..28).contains(&y)) },
        "params": fast(),
    });
    let a = run_edit(&app, &sid, &req).await;
    let b = run_edit(&app, &sid, &req).await;
    assert_eq!(a, b);
    let out = decode_image(&a).unwrap();
    assert_eq!((out.width(), out.height()), (64, 48));
    // outside the hole the source is kept
    let (_, prev) = get(&app, &format!("/sessions/{sid}/preview.png")).await;
    let prev = decode_image(&prev).unwrap();
    assert_eq!(out.pixel(3, 3), prev.pixel(3, 3));

    let mut other = req.clone();
    other["params"]["seed"] = json!(4);
    assert_ne!(run_edit(&app, &sid, &other).await, a);
}

#[tokio::test]
async fn retarget_reshuffle_and_local_scale() {
    let app = app();
    let sid = session(&app, &scene(64, 48, 5)).await;
    let mut p = fast();
    p["width"] = json!(50);
    let out = run_edit(&app, &sid, &json!({ "tool": "retarget", "params": p })).await;
    assert_eq!(decode_image(&out).unwrap().width(), 50);

    let mut p = fast();
    p["region"] = json!([8, 8, 24, 24]);
    p["offset"] = json!([20, 10]);
    p["mode"] = json!("interpolate");
    run_edit(&app, &sid, &json!({ "tool": "reshuffle", "params": p })).await;

    let mut p = fast();
    p["region"] = json!([24, 16, 40, 32]);
    p["factor"] = json!(1.25);
    let out = run_edit(&app, &sid, &json!({ "tool": "localScale", "params": p })).await;
    assert_eq!(decode_image(&out).unwrap().height(), 48);
}

#[tokio::test]
async fn annotations_constrain_retargeting() {
    let app = app();
    let sid = session(&app, &scene(64, 48, 6)).await;
    let mut p = fast();
    p["width"] = json!(54);
    let req = json!({
        "tool": "retarget",
        "annotations": [
            { "record": "line", "kind": "slope", "x0": 4, "y0": 40, "x1": 60, "y1": 40 },
            { "record": "region", "kind": "move", "x0": 0, "y0": 0, "x1": 10, "y1": 10, "dx": 2, "dy": 3 },
        ],
        "params": p,
    });
    run_edit(&app, &sid, &req).await;

    let mut bad = req.clone();
    bad["annotations"][1]["dx"] = json!(60);
    let (s, v) = post_json(&app, &format!("/sessions/{sid}/edits"), &bad).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
}

#[tokio::test]
async fn second_submit_while_running_is_busy() {
    let app = app();
    let sid = session(&app, &scene(160, 120, 7)).await;
    let req = json!({
        "tool": "complete",
        "masks": { "hole": mask_png(160, 120, |x, y| (50..110).contains(&x) && (40..80).contains(&y)) },
        "params": { "seed": 1 },
    });
    let uri = format!("/sessions/{sid}/edits");
    let (s, v) = post_json(&app, &uri, &req).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let (s2, _) = post_json(&app, &uri, &req).await;
    assert_eq!(s2, StatusCode::CONFLICT);

    // progress is visible while the job runs
    let job = v["jobId"].as_str().unwrap();
    let mut seen_partial = false;
    loop {
        let (_, b) = get(&app, &format!("/sessions/{sid}/jobs/{job}")).await;
        let v: Value = serde_json::from_slice(&b).unwrap();
        let p = v["progress"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        if v["state"] == "running" && p > 0.0 && p < 1.0 {
            seen_partial = true;
        }
        if v["state"] == "done" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    assert!(seen_partial);
    let (s, _) = post_json(&app, &uri, &req).await;
    assert_eq!(s, StatusCode::ACCEPTED);
}

#[tokio::test]
async fn unsupported_hole_label_is_named() {
    let app = app();
    let sid = session(&app, &scene(64, 48, 8)).await;
    let inside = |x: usize, y: usize| (20..40).contains(&x) && (16..32).contains(&y);
    let labels = ImageBuffer::from_fn(64, 48, 3, ColorSpace::Srgb, |x, y, c| {
        if x < 10 {
            [0.0, 0.0, 1.0][c]
        } else if inside(x, y) && x < 30 {
            [1.0, 0.0, 0.0][c]
        } else {
            0.0
        }
    });
    let req = json!({
        "tool": "complete",
        "masks": {
            "hole": mask_png(64, 48, inside),
            "labels": format!("data:image/png;base64,{}", STANDARD.encode(encode_png(&labels).unwrap())),
        },
        "params": fast(),
    });
    let (s, v) = post_json(&app, &format!("/sessions/{sid}/edits"), &req).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["label"], "#ff0000");
    assert!(v["error"].as_str().unwrap().contains("#ff0000"));

    // the session stays idle after a refusal
    let mut ok = req.clone();
    ok["masks"].as_object_mut().unwrap().remove("labels");
    let (s, _) = post_json(&app, &format!("/sessions/{sid}/edits"), &ok).await;
    assert_eq!(s, StatusCode::ACCEPTED);
}

#[tokio::test]
async fn request_errors() {
    let app = app();
    let sid = session(&app, &scene(64, 48, 9)).await;
    let uri = format!("/sessions/{sid}/edits");
    let hole = mask_png(64, 48, |x, y| (20..30).contains(&x) && (20..30).contains(&y));

    let (s, _) = post_json(&app, "/sessions/nope/edits", &json!({ "tool": "complete" })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get(&app, &format!("/sessions/{sid}/jobs/nope")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get(&app, "/sessions/nope/jobs/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get(&app, "/results/nope.png").await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    for body in [
        json!({ "tool": "blur" }),
        json!({ "tool": "complete" }),
        json!({ "tool": "complete", "masks": { "hole": "!!!" } }),
        json!({ "tool": "complete", "masks": { "hole": hole }, "bogus": 1 }),
        json!({ "tool": "complete", "masks": { "hole": hole }, "params": { "patchSize": 4 } }),
        json!({ "tool": "reshuffle", "params": { "region": [0, 0, 8, 8] } }),
        json!({ "tool": "retarget", "params": { "width": 0 } }),
        json!({ "tool": "retarget", "annotations": [{ "record": "line", "kind": "bent", "x0": 0, "y0": 0, "x1": 1, "y1": 1 }] }),
        json!({ "tool": "retarget", "annotations": [{ "record": "region", "kind": "move", "x0": 0, "y0": 0, "x1": 1, "y1": 1 }] }),
    ] {
        let (s, v) = post_json(&app, &uri, &body).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body} -> {v}");
        assert!(v["error"].is_string());
    }

    for body in [
        json!({ "tool": "complete", "masks": { "hole": mask_png(64, 48, |x, _| x < 5) } }),
        json!({ "tool": "complete", "masks": { "hole": mask_png(32, 48, |_, _| false) } }),
        json!({ "tool": "reshuffle", "params": { "region": [0, 0, 8, 8], "offset": [60, 0] } }),
        json!({ "tool": "localScale", "params": { "region": [0, 0, 20, 20], "factor": 2.0 } }),
    ] {
        let (s, v) = post_json(&app, &uri, &body).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {v}");
    }
}

#[tokio::test]
async fn failed_synthesis_reports_a_reason() {
    let app = app();
    // too small for the default pyramid once the patch is accounted for
    let sid = session(&app, &scene(64, 48, 10)).await;
    let mut p = fast();
    p["patchSize"] = json!(61);
    let (s, v) = post_json(
        &app,
        &format!("/sessions/{sid}/edits"),
        &json!({ "tool": "retarget", "params": p }),
    )
    .await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let done = wait(&app, &sid, v["jobId"].as_str().unwrap()).await;
    assert_eq!(done["state"], "failed");
    assert!(!done["error"].as_str().unwrap().is_empty());
    assert!(done.get("resultPngUrl").is_none());
}

#[tokio::test]
async fn cors_allows_the_editor() {
    let editor = router(Config {
        origin: Some("http://localhost:5173".into()),
        ..Config::default()
    });
    let req = Request::options("/sessions")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let res = editor.oneshot(req).await.unwrap();
    assert_eq!(
        res.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );
    let res = app()
        .oneshot(
            Request::get("/results/x.png")
                .header(header::ORIGIN, "http://example.org")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(res.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(), "*");
}

#[test]
fn annotation_json_round_trips_through_the_text_format() {
    let a = Annotations {
        models: vec![
            ModelConstraint::Line {
                kind: LineKind::Free,
                a: (1.5, 2.0),
                b: (30.0, 4.25),
            },
            ModelConstraint::Line {
                kind: LineKind::FixedSlope,
                a: (0.0, 10.0),
                b: (40.0, 10.0),
            },
            ModelConstraint::Line {
                kind: LineKind::FixedPosition {
                    a: (2.0, 3.0),
                    b: (50.0, 3.5),
                },
                a: (1.0, 1.0),
                b: (45.0, 2.0),
            },
            ModelConstraint::Region {
                rect: Rect::new(3, 4, 20, 22),
                scale: None,
            },
            ModelConstraint::Region {
                rect: Rect::new(5, 5, 9, 9),
                scale: Some(1.3),
            },
        ],
        hard: vec![HardRegion {
            source: Rect::new(0, 0, 8, 6),
            offset: Pos::new(-2, 7),
        }],
    };
    let records = from_annotations(&a);
    assert_eq!(records.len(), 6);
    let json = serde_json::to_string(&records).unwrap();
    let back: Vec<Record> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, records);
    assert_eq!(to_annotations(&back).unwrap(), a);
    for (r, line) in records.iter().zip(a.to_text().lines()) {
        assert_eq!(r.to_line().unwrap(), line);
    }
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v[2]["tx1"], 50.0);
    assert_eq!(v[5]["dy"], 7.0);
    assert!(v[0].get("s").is_none());
}
