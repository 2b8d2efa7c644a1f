long sum_array(int *a, int n)
{
    long s = 0;
    if (n > 16)
        n = 16;
    for (int i = 0; i < n; i++)
        s += a[i];
    return s;
}
