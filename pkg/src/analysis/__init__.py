"""Evaluation and reporting"""
from .evaluation import (
    median,
    QueryCase,
    QueryError,
    OraclePredictor,
    IdentityPredictor,
    ModelPredictor,
    query_cases,
    score_cases,
    evaluate_queries,
    evaluate_dataset,
    EvalReport,
    Localization,
    localize,
)
from .reports import (
    write_query_errors,
    read_query_errors,
    write_report_json,
    ablation_rows,
    write_ablation_csv,
    format_report,
    format_ablation,
)

__all__ = [
    'median',
    'QueryCase',
    'QueryError',
    'OraclePredictor',
    'IdentityPredictor',
    'ModelPredictor',
    'query_cases',
    'score_cases',
    'evaluate_queries',
    'evaluate_dataset',
    'EvalReport',
    'Localization',
    'localize',
    'write_query_errors',
    'read_query_errors',
    'write_report_json',
    'ablation_rows',
    'write_ablation_csv',
    'format_report',
    'format_ablation',
]
