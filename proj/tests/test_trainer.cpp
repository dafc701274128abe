#include <doctest.h>
#include "ktrans/trainer.hpp"
