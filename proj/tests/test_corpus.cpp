#include <doctest.h>
#include "ktrans/corpus.hpp"
