use std::path::Path;
use std::sync::Arc;

use brushwork::audio::{read_wav, SAMPLE_RATE};
use brushwork::imaging::read_image;
use brushwork::index::IndexManifest;
use brushwork::manifest::LibraryManifest;
use brushwork::selection::{ChunkLibrary, PaintingScorer, StageOneScorer};
use brushwork::{AudioEmbedder, CorrespondenceModel, EmbeddingIndex, ImageTensor};
use log::info;

use crate::config::SessionConfig;
use crate::error::{EngineError, Result};

/// Frozen models and library data shared by every tick of a session.
pub struct Resources {
    pub model: Arc<CorrespondenceModel>,
    pub embedder: AudioEmbedder,
    pub index: EmbeddingIndex,
    pub scorer: StageOneScorer<f32>,
    pub paintings: Option<PaintingScorer<f32>>,
}

fn startup<T>(r: brushwork::Result<T>) -> Result<T> {
    r.map_err(EngineError::Startup)
}

impl Resources {
    /// `scorer` must cover exactly the chunks stored in `index`.
    pub fn new(
        model: Arc<CorrespondenceModel>,
        embedder: AudioEmbedder,
        index: EmbeddingIndex,
        scorer: StageOneScorer<f32>,
        paintings: &[(String, ImageTensor)],
    ) -> Result<Self> {
        if embedder.dimension() != index.dimension() {
            return Err(EngineError::Config(format!(
                "embedder produces {}-d vectors but the index holds {}-d records",
                embedder.dimension(),
                index.dimension()
            )));
        }
        if !scorer.keys().iter().eq(index.keys()) {
            return Err(EngineError::Config("stage-1 library and embedding index cover different chunks".into()));
        }
        let paintings = if paintings.is_empty() { None } else { Some(PaintingScorer::new(model.clone(), paintings)?) };
        Ok(Resources { model, embedder, index, scorer, paintings })
    }

    /// From in-memory parts; chunk mel patches are projected once here.
    pub fn from_parts(
        model: CorrespondenceModel,
        embedder: AudioEmbedder,
        index: EmbeddingIndex,
        library: &ChunkLibrary<f32>,
        paintings: &[(String, ImageTensor)],
    ) -> Result<Self> {
        let model = Arc::new(model);
        let scorer = StageOneScorer::new(model.clone(), library)?;
        Self::new(model, embedder, index, scorer, paintings)
    }

    /// Load models, the index, and the track audio its companion manifest
    /// lists. Errors name the file that failed.
    pub fn load(config: &SessionConfig) -> Result<Self> {
        let model = startup(CorrespondenceModel::load(&config.correspondence))?;
        let embedder = startup(AudioEmbedder::load(&config.embedder))?;
        let index = startup(EmbeddingIndex::load(&config.index))?;
        let manifest_path = IndexManifest::path_for(&config.index);
        let manifest = startup(IndexManifest::load(&manifest_path))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let tracks = manifest
            .tracks
            .iter()
            .map(|t| Ok((t.track_id.clone(), read_wav(base.join(&t.source), SAMPLE_RATE)?)))
            .collect::<brushwork::Result<Vec<_>>>();
        let library = startup(tracks.and_then(|t| ChunkLibrary::from_tracks(&t)))?;
        info!("stage-1 library: {} chunks from {} tracks", library.len(), manifest.tracks.len());

        let library_path = config.library.clone().or_else(|| manifest.library.as_ref().map(|p| base.join(p)));
        let paintings = match library_path {
            Some(path) => {
                let lib = startup(LibraryManifest::load(&path))?;
                lib.paintings
                    .iter()
                    .map(|p| Ok((p.painting_id.clone(), startup(read_image(&p.image_path))?)))
                    .collect::<Result<Vec<_>>>()?
            }
            None => vec![],
        };
        Self::from_parts(model, embedder, index, &library, &paintings)
    }
}
