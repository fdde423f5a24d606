# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

"""
Scalars: numpy dtypes paired with the C type used in kernel signatures.
"""

import numpy as np


class NumpyScalar:
    def __init__(self, dtype, cname):
        self.__name__ = dtype.capitalize()
        self._dtype = np.dtype(dtype)
        self._size = self._dtype.itemsize
        self._c_type = cname

    def __call__(self, value=0):
        return self._dtype.type(value)

    def __repr__(self):
        return self.__name__


Float64 = NumpyScalar("float64", "double")
Float32 = NumpyScalar("float32", "float")
Int64 = NumpyScalar("int64", "int64_t")
Int32 = NumpyScalar("int32", "int32_t")
UInt8 = NumpyScalar("uint8", "uint8_t")


def is_scalar(cls):
    return isinstance(cls, NumpyScalar)
