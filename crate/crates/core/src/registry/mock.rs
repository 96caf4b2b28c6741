//! Deterministic stand-in experts.
//!
//! Outputs are a pure function of (seed, kind, prompt, regions, input
//! hashes). The artifact bytes are a canonical JSON description of exactly
//! those inputs, so the artifact hash changes whenever any of them does.

use async_trait::async_trait;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{
    BackendResponse, ExpertBackend, ExpertFailure, ExpertOutput, ExpertRequest, LayoutItem, MaskGrid, OutputPayload,
};
use crate::artifact::ArtifactRef;
use crate::protocol::{MediaKind, Region};

pub const DEFAULT_MASK_GRID: usize = 16;

#[derive(Debug, Clone)]
pub struct MockBackend {
    name: String,
    seed: u64,
    grid: usize,
}

impl MockBackend {
    pub fn new(name: impl Into<String>, seed: u64, grid: usize) -> Self {
        Self {
            name: name.into(),
            seed,
            grid,
        }
    }

    pub fn run(&self, req: &ExpertRequest) -> BackendResponse {
        execute_with(req, self.seed, self.grid, &self.name)
    }
}

#[async_trait]
impl ExpertBackend for MockBackend {
    async fn execute(&self, req: &ExpertRequest) -> Result<BackendResponse, ExpertFailure> {
        Ok(self.run(req))
    }
}

/// Mock output for `req` under `seed`, on the default mask grid.
pub fn mock_execute(req: &ExpertRequest, seed: u64) -> ExpertOutput {
    execute_with(req, seed, DEFAULT_MASK_GRID, "mock").output
}

fn execute_with(req: &ExpertRequest, seed: u64, grid: usize, name: &str) -> BackendResponse {
    let descriptor = json!({
        "seed": seed,
        "kind": req.kind,
        "prompt": req.prompt,
        "regions": req.regions.iter().map(Region::to_canonical).collect::<Vec<_>>(),
        "inputs": req.input_artifacts.iter().map(|a| &a.hash).collect::<Vec<_>>(),
    })
    .to_string();
    let digest = Sha256::digest(descriptor.as_bytes());
    // Simulated, so reports stay reproducible.
    let latency_ms = 20 + u64::from(digest[0]) % 80;

    let media = req.kind.output_media();
    let (payload, data) = match media {
        MediaKind::Mask => {
            let mask = rasterize(&req.regions, grid);
            let mut bytes = descriptor.into_bytes();
            for row in &mask.rows {
                bytes.push(b'\n');
                bytes.extend_from_slice(row.as_bytes());
            }
            let artifact = ArtifactRef::for_bytes(&bytes, MediaKind::Mask);
            (OutputPayload::Mask { artifact, grid: mask }, Some(bytes))
        }
        MediaKind::Layout => {
            let items = req
                .regions
                .iter()
                .map(|r| LayoutItem {
                    label: req.prompt.clone(),
                    region: *r,
                })
                .collect();
            (OutputPayload::Layout { items }, None)
        }
        MediaKind::Image | MediaKind::Video | MediaKind::Audio => {
            let bytes = descriptor.into_bytes();
            let artifact = ArtifactRef::for_bytes(&bytes, media);
            (OutputPayload::Artifact { artifact }, Some(bytes))
        }
    };
    BackendResponse {
        output: ExpertOutput {
            payload,
            latency_ms,
            expert_name: name.to_string(),
        },
        data,
    }
}

/// Marks every cell of a `size`×`size` grid whose center lies inside one of
/// `regions` (edges inclusive). Exact: coordinates are compared in integer
/// thousandths.
pub fn rasterize(regions: &[Region], size: usize) -> MaskGrid {
    let milli = |v: f64| (v * 1000.0).round() as u64;
    let n = size as u64;
    let mut cells = vec![vec![b'0'; size]; size];
    for r in regions {
        let (x1, y1, x2, y2) = (milli(r.x1), milli(r.y1), milli(r.x2), milli(r.y2));
        // Cell j's center is (2j+1)/(2n); scaled by 2000n it is 1000(2j+1).
        let inside = |j: usize, lo: u64, hi: u64| {
            let c = 1000 * (2 * j as u64 + 1);
            2 * n * lo <= c && c <= 2 * n * hi
        };
        for (row, line) in cells.iter_mut().enumerate() {
            if !inside(row, y1, y2) {
                continue;
            }
            for (col, cell) in line.iter_mut().enumerate() {
                if inside(col, x1, x2) {
                    *cell = b'1';
                }
            }
        }
    }
    MaskGrid {
        size,
        rows: cells
            .into_iter()
            .map(|r| String::from_utf8(r).expect("ascii"))
            .collect(),
    }
}
