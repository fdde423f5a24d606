# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #
