#include <doctest.h>
#include "ktrans/isa.hpp"
