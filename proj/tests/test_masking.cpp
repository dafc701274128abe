#include <doctest.h>
#include "ktrans/masking.hpp"
