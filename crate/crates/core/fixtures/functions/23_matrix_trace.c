int matrix_trace(int *m, int dim)
{
    int t = 0;
    int row = 0;
    if (dim > 4)
        dim = 4;
    while (row < dim) {
        for (int col = 0; col < dim; col++) {
            if (row == col)
                t += m[row * 4 + col];
        }
        row++;
    }
    return t;
}
