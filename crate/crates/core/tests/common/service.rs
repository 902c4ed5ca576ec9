//! Review-service fixtures: a manifest of tiny PNG pairs and a server on an
//! ephemeral port.

use std::path::PathBuf;

use histostyle::image::{encode_png, ColorMode, RgbImage};
use histostyle::service::{open_state, serve, ManifestPair, ReviewManifest};
use tempfile::TempDir;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct Fixture {
    pub dir: TempDir,
    pub manifest: ReviewManifest,
    pub scores: PathBuf,
}

impl Fixture {
    pub fn new(pairs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut list = Vec::new();
        for i in 0..pairs {
            let id = format!("img{i:03}");
            let original = dir.path().join(format!("{id}.png"));
            let stylized = dir.path().join(format!("{id}.stylized.png"));
            let v = (i % 256) as u8;
            let img = RgbImage::new(2, 2, vec![v; 12]).unwrap();
            std::fs::write(&original, encode_png(&img).unwrap()).unwrap();
            let img = RgbImage::new(2, 2, vec![255 - v; 12]).unwrap();
            std::fs::write(&stylized, encode_png(&img).unwrap()).unwrap();
            list.push(ManifestPair {
                image_id: id,
                original,
                stylized,
                color_mode: ColorMode::ALL[i % 4],
            });
        }
        let scores = dir.path().join("scores.csv");
        Self {
            dir,
            manifest: ReviewManifest {
                pairs: list,
                seed: Some(42),
            },
            scores,
        }
    }

    pub fn scores_text(&self) -> String {
        std::fs::read_to_string(&self.scores).unwrap()
    }
}

pub struct Server {
    pub base: String,
    stop: oneshot::Sender<()>,
    handle: JoinHandle<histostyle::Result<()>>,
}

impl Server {
    pub async fn start(fixture: &Fixture) -> Self {
        let state = open_state(fixture.manifest.clone(), &fixture.scores).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, rx) = oneshot::channel();
        let handle = tokio::spawn(serve(listener, state, async {
            let _ = rx.await;
        }));
        Self { base, stop, handle }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn stop(self) {
        let _ = self.stop.send(());
        self.handle.await.unwrap().unwrap();
    }
}

pub fn score_body(rater: &str, image: &str, removed: u8, added: u8) -> serde_json::Value {
    serde_json::json!({
        "rater_id": rater,
        "image_id": image,
        "removed_artifacts": removed,
        "added_structures": added,
    })
}
