"""Hand-written wire-format architecture dicts for worker tests."""


def conv_spec(lid, in_size, out_c, k=3, s=1, p=1, d=1, groups=1, bias=True):
    c, h, w = in_size
    span = d * (k - 1) + 1
    oh = (h + 2 * p - span) // s + 1
    ow = (w + 2 * p - span) // s + 1
    return {"category": "conv", "id": lid, "in": list(in_size),
            "out": [out_c, oh, ow], "kernel": [k, k], "stride": [s, s],
            "padding": [p, p, p, p], "dilation": d, "bias_used": bias,
            "groups": groups}


def pool_spec(lid, in_size, k=2, s=2, kind="max"):
    c, h, w = in_size
    oh = (h - k) // s + 1
    ow = (w - k) // s + 1
    return {"category": "pool", "id": lid, "in": list(in_size),
            "out": [c, oh, ow], "kernel": [k, k], "stride": [s, s],
            "padding": [0, 0, 0, 0], "dilation": 1, "bias_used": False,
            "pool_type": kind}


def other_spec(lid, in_size, name):
    return {"category": "other", "id": lid, "in": list(in_size),
            "out": list(in_size), "name": name, "value": []}


def block(kind, width, layers):
    return {"kind": kind, "width": width, "layers": layers}


def arch_dict(blocks, input_shape=(3, 32, 32), num_classes=10):
    return {"input_shape": list(input_shape), "num_classes": num_classes,
            "blocks": blocks}


def five_block():
    """conv+bn+relu / maxpool / conv / bn / relu on 32x32 RGB, 10 classes.

    Parameter names, hand-enumerated: layers 0..6 are conv, bn, relu, pool,
    conv, bn, relu; only 0, 1, 4, 5 own parameters, plus the head.
    """
    s0 = (3, 32, 32)
    s1 = (8, 32, 32)
    s2 = (8, 16, 16)
    return arch_dict([
        block("conv_norm_act", 8, [conv_spec(0, s0, 8),
                                   other_spec(1, s1, "batchnorm"),
                                   other_spec(2, s1, "relu")]),
        block("maxpool", 8, [pool_spec(3, s1)]),
        block("conv3", 8, [conv_spec(4, s2, 8)]),
        block("batch_norm", 8, [other_spec(5, s2, "batchnorm")]),
        block("relu", 8, [other_spec(6, s2, "relu")]),
    ])
