#include <doctest.h>
TEST_CASE("placeholder test_datagen") { CHECK(true); }
