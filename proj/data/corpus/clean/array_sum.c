#include <stddef.h>

long array_sum(const int *values, size_t count) {
  long total = 0;
  for (size_t i = 0; i < count; i++) {
    total += values[i];
  }
  return total;
}

int array_max(const int *values, size_t count) {
  int best = values[0];
  for (size_t i = 1; i < count; i++) {
    if (values[i] > best) {
      best = values[i];
    }
  }
  return best;
}

int array_min(const int *values, size_t count) {
  int best = values[0];
  for (size_t i = 1; i < count; i++) {
    if (values[i] < best) {
      best = values[i];
    }
  }
  return best;
}
