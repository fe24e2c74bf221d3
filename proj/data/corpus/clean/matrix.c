void matrix_multiply(const double *a, const double *b, double *out, int n) {
  for (int i = 0; i < n; i++) {
    for (int j = 0; j < n; j++) {
      double sum = 0.0;
      for (int k = 0; k < n; k++) {
        sum += a[i * n + k] * b[k * n + j];
      }
      out[i * n + j] = sum;
    }
  }
}

void matrix_transpose(const double *a, double *out, int rows, int cols) {
  for (int i = 0; i < rows; i++) {
    for (int j = 0; j < cols; j++) {
      out[j * rows + i] = a[i * cols + j];
    }
  }
}

double matrix_trace(const double *a, int n) {
  double total = 0.0;
  for (int i = 0; i < n; i++) {
    total += a[i * n + i];
  }
  return total;
}
