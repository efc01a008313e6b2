"""Network workloads built from many circuit instances, plus layer-level studies."""

from .ann import AnnResult, LayeredAnn, ideal_scores, oracle_ann, run_ann_inference, train_ann
from .quant import adc_code, dac_value, quantize, step_size
from .snn import SnnResult, SpikingNet, encode_images, oracle_snn, poisson_encode, run_snn, train_snn
from .studies import (BenchRow, PropagationResult, error_propagation_study, runtime_benchmark, trend_stats,
                      write_bench_csv)

__all__ = [
    "AnnResult", "LayeredAnn", "ideal_scores", "oracle_ann", "run_ann_inference", "train_ann",
    "adc_code", "dac_value", "quantize", "step_size", "SnnResult", "SpikingNet", "encode_images",
    "oracle_snn", "poisson_encode", "run_snn", "train_snn", "BenchRow", "PropagationResult",
    "error_propagation_study", "runtime_benchmark", "trend_stats", "write_bench_csv",
]
