void clamp_array(int *a, int n, int lo, int hi)
{
    if (n < 0)
        n = 0;
    if (n > 16)
        n = 16;
    for (int i = 0; i < n; i++) {
        if (a[i] < lo)
            a[i] = lo;
        else if (a[i] > hi)
            a[i] = hi;
    }
}
