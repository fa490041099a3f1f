//! The preprocessing pipeline: imputation, encoding, fallback imputation,
//! constant-column removal and the final one-hot expansion, fit on training
//! data and replayed on any table with the same features.

use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderSpec, FittedEncoder};
use crate::error::Result;
use crate::preprocess::{
    drop_constant_columns, final_one_hot, impute_stage1, impute_stage2, is_constant, DropPlan, FallbackPlan,
    ImputationPlan, OneHotPlan,
};
use crate::table::DataTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub imputation: ImputationPlan,
    pub encoder: FittedEncoder,
    pub fallback: FallbackPlan,
    pub drop: DropPlan,
    pub one_hot: OneHotPlan,
}

impl FittedPipeline {
    /// Fits every stage on `train` and returns the numeric training table.
    ///
    /// When every encoded feature is constant the pipeline keeps no
    /// features and downstream learners see an empty design.
    pub fn fit(train: &DataTable, spec: &EncoderSpec) -> Result<(FittedPipeline, DataTable)> {
        let (imputed, imputation) = impute_stage1(train)?;
        let (encoder, encoded) = FittedEncoder::fit_transform(&imputed, spec)?;
        let fallback = FallbackPlan::fit(&encoded, &encoder.fallbacks())?;
        let filled = impute_stage2(&encoded, &fallback)?;
        let (kept, drop) = if filled.n_features() > 0 && filled.features().all(is_constant) {
            let drop = DropPlan {
                dropped: filled.feature_names(),
                kept: Vec::new(),
            };
            (filled.with_features(Vec::new())?, drop)
        } else {
            drop_constant_columns(&filled)?
        };
        let (out, one_hot) = final_one_hot(&kept)?;
        Ok((
            FittedPipeline {
                imputation,
                encoder,
                fallback,
                drop,
                one_hot,
            },
            out,
        ))
    }

    pub fn transform(&self, table: &DataTable) -> Result<DataTable> {
        let imputed = self.imputation.apply(table)?;
        let encoded = self.encoder.transform(&imputed)?;
        let filled = impute_stage2(&encoded, &self.fallback)?;
        let kept = self.drop.apply(&filled)?;
        self.one_hot.apply(&kept)
    }
}
