#include <stddef.h>

static void swap(int *a, int *b) {
  int tmp = *a;
  *a = *b;
  *b = tmp;
}

void insertion_sort(int *values, size_t count) {
  for (size_t i = 1; i < count; i++) {
    size_t j = i;
    while (j > 0 && values[j - 1] > values[j]) {
      swap(&values[j - 1], &values[j]);
      j--;
    }
  }
}

static size_t partition(int *values, size_t lo, size_t hi) {
  int pivot = values[hi];
  size_t i = lo;
  for (size_t j = lo; j < hi; j++) {
    if (values[j] < pivot) {
      swap(&values[i], &values[j]);
      i++;
    }
  }
  swap(&values[i], &values[hi]);
  return i;
}

void quick_sort(int *values, size_t lo, size_t hi) {
  if (lo >= hi) {
    return;
  }
  size_t p = partition(values, lo, hi);
  if (p > 0) {
    quick_sort(values, lo, p - 1);
  }
  quick_sort(values, p + 1, hi);
}
