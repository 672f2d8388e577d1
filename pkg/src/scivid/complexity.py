"""Analytic complexity accounting: per-component multiply-count formulas and
closed-form parameter enumeration, independent of the network builder.

Multiplies are counted singly (a multiply-accumulate is one multiply).
"""

from __future__ import annotations

import math

from .network import NetworkConfig, STEM_KERNELS, stem_channels, head_channels


def flops_analytic(component, h, w, t, c, k=3, heads=1):
    """Evaluate the published complexity formula for one block component."""
    hw = h * w
    if component == "SCB":
        return 0.5 * hw * t * k * k * c * c
    if component == "TSAB":
        return 0.5 * hw * t * c * c + 0.5 * hw * t * t * c
    if component == "SCB3D":
        return 0.5 * hw * t * k ** 3 * c * c
    if component == "G-MSA":
        return hw * t * c * c + (hw * t) ** 2 * c
    if component == "TS-MSA":
        return 2 * hw * t * c * c + t * hw * hw * c + hw * t * t * c
    raise ValueError(f"unknown component {component!r}")


def _conv_params(cin, cout, kernel):
    return cout * cin * math.prod(kernel) + cout


def _conv_mults(cin, cout, kernel, out_elems):
    return out_elems * cout * cin * math.prod(kernel)


def _cformer_param_layers(prefix, c):
    half = c // 2
    return [
        (prefix + ".scb.conv1", _conv_params(c, half, (3, 3))),
        (prefix + ".scb.conv2", _conv_params(half, half, (3, 3))),
        (prefix + ".tsab.wq", c * half),
        (prefix + ".tsab.wk", c * half),
        (prefix + ".tsab.wv", c * half),
        (prefix + ".tsab.wp", half * half),
        (prefix + ".ffn.conv2", _conv_params(c, c, (3, 3, 3))),
        (prefix + ".ffn.conv1", _conv_params(c, c, (1, 1, 1))),
    ]


def param_count(config: NetworkConfig):
    """Closed-form per-layer parameter counts; returns (total, {layer: count})."""
    config.validate()
    layers = {}
    ch = stem_channels(config)
    for i, kernel in enumerate(STEM_KERNELS, start=1):
        layers[f"stem.conv{i}"] = _conv_params(ch[i - 1], ch[i], kernel)
    part = config.part_channels
    for n in range(config.blocks):
        for i in range(config.split):
            prefix = f"block{n}.part{i}"
            if i > 0:
                layers[prefix + ".reduce"] = _conv_params((i + 1) * part, part, (1, 1, 1))
            for name, count in _cformer_param_layers(prefix + ".cf", part):
                layers[name] = count
        layers[f"block{n}.fuse"] = _conv_params(config.channels, config.channels, (1, 1, 1))
    hc = head_channels(config)
    layers["head.conv1"] = _conv_params(hc[0], hc[1], (3, 3, 3))
    layers["head.conv2"] = _conv_params(hc[1], hc[2], (1, 1, 1))
    layers["head.conv3"] = _conv_params(hc[2], hc[3], (3, 3, 3))
    return sum(layers.values()), layers


def _cformer_mults(c, t, h, w, heads):
    half = c // 2
    hwt = h * w * t
    mults = {
        "scb.conv1": _conv_mults(c, half, (3, 3), hwt),
        "scb.conv2": _conv_mults(half, half, (3, 3), hwt),
        "tsab.qkv": 3 * hwt * c * half,
        "tsab.attn": 2 * h * w * t * t * half,  # QK^T plus A*V, summed over heads
        "tsab.proj": hwt * half * half,
        "ffn.conv2": _conv_mults(c, c, (3, 3, 3), hwt),
        "ffn.conv1": _conv_mults(c, c, (1, 1, 1), hwt),
    }
    return sum(mults.values())


def network_flops(config: NetworkConfig, t, h, w):
    """Analytic multiply count of a full forward pass at input t x h x w.

    Grayscale runs the blocks at half spatial resolution; the Bayer path
    takes half-resolution input and restores full resolution in the head.
    """
    config.validate()
    parts = {}
    ch = stem_channels(config)
    # stem convs 1-2 at input resolution, conv3 output at half resolution
    parts["stem"] = (
        _conv_mults(ch[0], ch[1], STEM_KERNELS[0], t * h * w)
        + _conv_mults(ch[1], ch[2], STEM_KERNELS[1], t * h * w)
        + _conv_mults(ch[2], ch[3], STEM_KERNELS[2], t * (h // 2) * (w // 2))
    )
    hh, hw_ = h // 2, w // 2
    part = config.part_channels
    per_block = config.split * _cformer_mults(part, t, hh, hw_, config.heads)
    for i in range(1, config.split):
        per_block += _conv_mults((i + 1) * part, part, (1, 1, 1), t * hh * hw_)
    per_block += _conv_mults(config.channels, config.channels, (1, 1, 1), t * hh * hw_)
    parts["blocks"] = config.blocks * per_block
    hc = head_channels(config)
    parts["head"] = (
        _conv_mults(hc[0], hc[1], (3, 3, 3), t * h * w)
        + _conv_mults(hc[1], hc[2], (1, 1, 1), t * h * w)
        + _conv_mults(hc[2], hc[3], (3, 3, 3), t * h * w)
    )
    return sum(parts.values()), parts
