# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import json

import numpy as np
from numpy.testing import assert_allclose as np_assert_allclose


class Print:
    suppress = False

    def __call__(self, *args, **kwargs):
        if not self.suppress:
            print(*args, **kwargs)


_print = Print()


def assert_allclose(a, b, rtol=1e-7, atol=1e-7):
    np_assert_allclose(a, b, rtol=rtol, atol=atol)


class JEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        elif np.issubdtype(type(obj), np.integer):
            return int(obj)
        elif np.issubdtype(type(obj), np.floating):
            return float(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        elif hasattr(obj, "to_dict"):
            return obj.to_dict()
        else:
            return json.JSONEncoder.default(self, obj)


def dump_json(document, path):
    with open(path, "w") as fid:
        json.dump(document, fid, cls=JEncoder, indent=2)
        fid.write("\n")


def config_comment(config):
    """One-line CSV comment echoing the run configuration."""
    return "# config: " + json.dumps(config, cls=JEncoder, sort_keys=True)
