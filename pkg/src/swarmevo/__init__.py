"""Heterogeneous swarm rule-set evolution on a 2D source-to-sink relay task.

Modules: ``grammar`` (rule genomes), ``radio`` and ``world`` (simulator),
``agents`` (perception and online learning), ``evolution`` (evaluation and
rule exchange), ``archive`` (fitness-novelty archive), ``experiment``,
``stats``, ``baseline`` and ``cli``.
"""
__version__ = "0.1.0"
