#include <doctest.h>
#include "ktrans/model.hpp"
