#include <doctest.h>
#include "ktrans/eval.hpp"
