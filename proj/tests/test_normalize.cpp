#include <doctest.h>
#include "ktrans/normalize.hpp"
