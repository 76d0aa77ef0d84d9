# Tests package for hazardset.
